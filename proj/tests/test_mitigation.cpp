int pb_placeholder_test_mitigation_cpp;
