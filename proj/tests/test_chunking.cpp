int pb_placeholder_test_chunking_cpp;
