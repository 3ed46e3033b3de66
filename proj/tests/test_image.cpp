int pb_placeholder_test_image_cpp;
