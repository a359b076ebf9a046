// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#include "splatcore/cli.hpp"

int main(int argc, char **argv) { return splatcore::cli::main(argc, argv); }
