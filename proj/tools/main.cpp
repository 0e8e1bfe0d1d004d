// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return a2fpn::cli::run(argc, argv, std::cout, std::cerr); }
