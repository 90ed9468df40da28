#pragma once

#include "ecgid/signal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ecgid {

// Text recording format: header line `subject_id,session,condition,sample_rate_hz`
// followed by one decimal amplitude per line.
RawRecording read_recording(const std::filesystem::path& path);
void write_recording(const std::filesystem::path& path, const RawRecording& rec);

// Every `*.rec` file in `dir`, in lexicographic filename order.
std::vector<RawRecording> read_recording_dir(const std::filesystem::path& dir);

// Canonical filename stem, e.g. `T03_S2_stand`.
std::string recording_stem(const RawRecording& rec);

// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace ecgid
