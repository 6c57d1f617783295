#pragma once

#include <filesystem>
#include <vector>

#include "dogpain/data.hpp"

namespace dogpain::synth {

// Renders a stick-figure dog walking in place: 17 keypoints on sinusoidal
// gait, pain class with attenuated leg swing plus a vertical head bob.
// Writes, per video: frames/NNNNNN.ppm, keypoints.txt (with detector noise),
// keypoints_clean.txt (ground truth, for PCK), detections.txt; plus a
// manifest.txt at the root. Fully determined by cfg.seed.
std::vector<data::VideoEntry> generate(const data::SynthConfig& cfg,
                                       const std::filesystem::path& out_dir);

// Blob-localization oracle: identical walkers in both classes, class 1 frames
// additionally carry a bright disc at a per-video position (written to
// blob.txt as "x1 y1 x2 y2").
std::vector<data::VideoEntry> generate_blob_task(const data::BlobTaskConfig& cfg,
                                                 const std::filesystem::path& out_dir);

data::Bbox load_blob_box(const std::filesystem::path& video_dir);

}  // namespace dogpain::synth
