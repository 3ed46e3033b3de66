int pb_placeholder_test_pipeline_cpp;
