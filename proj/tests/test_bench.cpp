int pb_placeholder_test_bench_cpp;
