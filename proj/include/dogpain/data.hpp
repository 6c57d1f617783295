#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dogpain/skeleton.hpp"
#include "dogpain/tensor.hpp"

namespace dogpain::data {

struct Bbox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

struct DetectionRecord {
  int frame_index = 0;
  Bbox bbox;
  double confidence = 0.0;
};

struct VideoEntry {
  std::string subject_id;
  int label = 0;  // 1 = pain, 0 = no-pain
  std::string pain_subtype;  // orthopedic | neurological | none
  std::filesystem::path frame_dir;
  std::filesystem::path keypoint_path;
  std::filesystem::path detection_path;
  int frame_count = 0;  // 2 FPS samples; filled when the keypoint file is read
};

// One classification unit: 8 aligned (frame, pose) pairs and a label.
template <typename T>
struct Clip {
  num::Tensor<T> frames;  // [8,3,H,W] in [0,1]
  num::Tensor<T> poses;   // [8,34] normalized keypoints
  int label = 0;
  std::string subject_id;
  std::string video_id;
  int start_frame = 0;
};

struct FoldPlan {
  struct Fold {
    std::vector<std::string> train_subjects;
    std::vector<std::string> validation_subjects;
  };
  std::vector<std::string> test_subjects;
  std::vector<Fold> folds;
  std::uint64_t seed = 0;
};

struct SynthConfig {
  int subjects_per_class = 20;
  int frames_per_video = 24;
  int image_size = 64;
  double gait_amplitude = 0.35;  // leg swing, fraction of body scale
  double attenuation = 0.5;      // pain-class swing multiplier
  double head_bob = 0.08;        // pain-class vertical bob, fraction of body scale
  double noise_sigma = 0.01;    // keypoint noise, pixels
  std::uint64_t seed = 0;

  void validate() const;
};

// Blob-localization oracle for the saliency suite: class 1 frames carry a
// bright disc at a per-video position, poses are class-uninformative.
struct BlobTaskConfig {
  int videos_per_class = 30;
  int frames_per_video = 8;
  int image_size = 64;
  double blob_radius = 9.0;  // pixels
  std::uint64_t seed = 0;
};

constexpr int kClipLen = 8;
constexpr int kClipStride = 6;  // 8 frames, 2-frame overlap
constexpr double kDetectionConfidenceThreshold = 0.25;
constexpr double kBboxExpandFactor = 0.10;

// Keeps detections with confidence strictly above the threshold, then the
// single best detection per frame (first wins ties). Output ordered by frame.
std::vector<DetectionRecord> filter_detections(std::vector<DetectionRecord> records,
                                               double threshold = kDetectionConfidenceThreshold);

// Grows width and height about the fixed center, clamped to [0,img_w]x[0,img_h].
Bbox expand_bbox(const Bbox& b, double factor, double img_w, double img_h);

// Window starts for 8-frame clips at stride 6; trailing partials dropped.
std::vector<int> slice_starts(int n_frames);

// Subject-wise test split plus a 5-fold train/validation partition,
// stratified by class. Validation chunks partition the non-test subjects.
FoldPlan make_splits(const std::vector<VideoEntry>& videos, double test_fraction = 0.13,
                     int n_folds = 5, std::uint64_t seed = 0);

// -- line-oriented interchange files -----------------------------------------
// Keypoint file: header "kp v1 <17 names>", then per frame:
//   frame_index then 17 triples "x y v".
// Detection file: header "det v1", then "frame_index x1 y1 x2 y2 confidence".
// Manifest: header "manifest v1", then
//   "subject_id label subtype frame_dir keypoint_path detection_path".
std::vector<skel::SkeletonFrame> load_keypoints(const std::filesystem::path& path);
void save_keypoints(const std::filesystem::path& path, const std::vector<skel::SkeletonFrame>& frames);

std::vector<DetectionRecord> load_detections(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& records);

std::vector<VideoEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<VideoEntry>& videos);

std::filesystem::path frame_image_path(const std::filesystem::path& frame_dir, int frame_index);

// Canonical preprocessing for one video: slice clip spans, repair each span
// independently, normalize, load + crop + resize frames. Dropped clips are
// skipped; `dropped` (when given) counts them.
template <typename T>
std::vector<Clip<T>> assemble_clips(const VideoEntry& video, int image_size, int* dropped = nullptr);

extern template std::vector<Clip<float>> assemble_clips<float>(const VideoEntry&, int, int*);
extern template std::vector<Clip<double>> assemble_clips<double>(const VideoEntry&, int, int*);

}  // namespace dogpain::data
