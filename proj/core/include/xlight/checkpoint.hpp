#pragma once

#include <stdexcept>
#include <string>

#include "xlight/nn.hpp"

namespace xlight {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary parameter snapshot, bit-exact across save/load. The store passed to
// load must already contain every parameter with matching shape; values are
// overwritten in place so optimizer state and graph references stay valid.
void save_checkpoint(const std::string& path, const nn::ParamStore& params);
void load_checkpoint(const std::string& path, nn::ParamStore& params);

}  // namespace xlight
