int pb_placeholder_oracles_cpp;
