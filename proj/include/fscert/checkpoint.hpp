#pragma once

#include <optional>
#include <string>

#include "fscert/encoder.hpp"
#include "fscert/gsb.hpp"

namespace fscert {

// Versioned binary container: magic "FSC1", section count, then tagged
// sections. Tensors are little-endian 32-bit floats preceded by dimension
// headers. Sections:
//   "ENCD" encoder (always present)
//   "GSBP" denoiser parameters (optional)
//   "GSBM" mapper parameters (optional)
struct Checkpoint {
  Encoder encoder;
  std::optional<DenoiserParams> denoiser;
  std::optional<MapperParams> mapper;
  double gsb_sigma = 0.0;  // sigma the gsb stages were trained for (0 = none)
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fscert
