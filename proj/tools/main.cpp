// Copyright 2026 The difflab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "difflab/cli.hpp"

int main(int argc, char** argv) { return difflab::cli::run(argc, argv, std::cout, std::cerr); }
