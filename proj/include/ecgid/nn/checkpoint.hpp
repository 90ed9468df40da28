#pragma once

#include "ecgid/nn/dual_expert.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace ecgid::nn {

// Binary container: magic "ECGIDCKP", format version, then every model as
// input shape, seed, layer specs, trainable mask and tensors (little-endian
// u64 length + IEEE doubles), followed by the training histories.
void write_checkpoint(std::ostream& os, const ExpertModel& model);
ExpertModel read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ExpertModel& model);
ExpertModel load_checkpoint(const std::filesystem::path& path);

void write_model(std::ostream& os, const Sequential& model);
Sequential read_model(std::istream& is);

// One line per layer with its spec and output shape, for diffing.
std::string layer_manifest(const ExpertModel& model);

}  // namespace ecgid::nn
