int pb_placeholder_test_mi_cpp;
