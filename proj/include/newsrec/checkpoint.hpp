// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "newsrec/params.hpp"

namespace newsrec {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary layout: "NRT1", then per tensor: u32 name length, UTF-8 name,
// u32 rank, u32 dims, f64 payload. All integers and floats little-endian.
std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const ParameterStore& store);
NamedTensors read_checkpoint(const std::string& path);

/// Copies every tensor of the checkpoint whose name exists in `store`
/// (shapes must agree). Returns the number of parameters restored. With
/// `require_all`, every store parameter must be present in the file.
std::size_t load_checkpoint_into(const std::string& path, ParameterStore& store,
                                 bool require_all = true);

}  // namespace newsrec
