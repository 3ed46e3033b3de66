int pb_placeholder_test_iforest_cpp;
