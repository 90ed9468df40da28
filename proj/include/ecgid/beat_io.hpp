#pragma once

#include "ecgid/beats.hpp"

#include <filesystem>
#include <vector>

namespace ecgid {

// Beat dataset: a header row, then one row per beat
//   subject_id,session,condition,heart_rate_bpm,t_peak_rel_r,source_time_s,s0,...,s109[,augmented]
// Beats are assumed to be sampled at 200 Hz. The trailing `augmented` column
// (0/1) is written when `with_augmented_flag` is set and is optional on read.
void write_beats(const std::filesystem::path& path, const std::vector<BeatTemplate>& beats,
                 bool with_augmented_flag = false);
std::vector<BeatTemplate> read_beats(const std::filesystem::path& path);

}  // namespace ecgid
