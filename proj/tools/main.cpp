// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return arcl::cli::run(argc, argv, std::cout, std::cerr); }
