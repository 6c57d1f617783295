#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dogpain/errors.hpp"

namespace dogpain::skel {

// 17-keypoint dog skeleton. Index order is fixed: 0 left eye, 1 right eye,
// 2 nose tip, 3 neck/withers, 4 tail end, then legs LF, RF, LB, RB each as
// (elbow, knee, paw) occupying 5..16.
constexpr int kNumKeypoints = 17;
constexpr int kLeftEye = 0;
constexpr int kRightEye = 1;
constexpr int kNose = 2;
constexpr int kNeck = 3;  // withers; the spine's front landmark
constexpr int kTailEnd = 4;

enum class Leg { LF = 0, RF = 1, LB = 2, RB = 3 };

inline int leg_elbow(Leg l) { return 5 + 3 * static_cast<int>(l); }
inline int leg_knee(Leg l) { return 6 + 3 * static_cast<int>(l); }
inline int leg_paw(Leg l) { return 7 + 3 * static_cast<int>(l); }

// Left/right partner (LF<->RF, LB<->RB).
Leg mirror_leg(Leg l);
// Front/back partner on the same side (LF<->LB, RF<->RB).
Leg front_back_leg(Leg l);

const char* keypoint_name(int index);

enum class Vis : std::uint8_t {
  missing = 0,
  visible = 1,
  inferred = 2,  // filled by a repair rule; treated as visible geometry
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  Vis vis = Vis::missing;
  bool present() const { return vis != Vis::missing; }
};

struct SkeletonFrame {
  std::array<Keypoint, kNumKeypoints> points;
  int frame_index = 0;

  int missing_count() const {
    int n = 0;
    for (const auto& p : points) n += p.present() ? 0 : 1;
    return n;
  }
};

// Root-centered, spine-scaled coordinates (dimensionless).
struct NormalizedFrame {
  std::array<Keypoint, kNumKeypoints> points;
  int frame_index = 0;
};

struct RepairReport {
  enum class Reason { none, too_many_missing, spine_missing };
  int interpolated = 0;
  int leg_inferred = 0;
  int symmetry_filled = 0;
  bool discarded = false;
  Reason reason = Reason::none;
};

struct RepairResult {
  std::vector<SkeletonFrame> frames;
  std::vector<RepairReport> reports;
  bool clip_dropped = false;
  RepairReport::Reason drop_reason = RepairReport::Reason::none;
};

// Rule 1: per keypoint, fill temporal gaps by linear interpolation between
// the nearest visible occurrences; hold the nearest value at sequence edges.
// Points never seen stay missing. Frames must be ordered by frame_index.
std::pair<std::vector<SkeletonFrame>, std::vector<RepairReport>> interpolate_missing(
    const std::vector<SkeletonFrame>& seq);

// Rule 2: discard when more than nine keypoints are missing or a spine
// landmark (neck or tail end) is missing. Evaluated after rule 1.
bool should_discard(const SkeletonFrame& f);

// Rule 3: exactly one of the leg's three joints missing; fill it from the
// other two (knee = midpoint, elbow/paw by reflection along the chain).
SkeletonFrame infer_leg_joint(const SkeletonFrame& f, Leg leg);

// Rule 4: two or more joints missing in the leg; copy from the mirror leg
// reflected across the spine line, falling back to the same-side front/back
// leg translated by the elbow (or knee) offset between the two legs.
SkeletonFrame symmetry_fill(const SkeletonFrame& f, Leg leg, int* filled = nullptr);

// Applies the four rules in order over one clip. A frame failing rule 2
// drops the whole clip.
RepairResult repair(const std::vector<SkeletonFrame>& seq);

// Root-point centering and spine-length scaling. Requires visible neck and
// tail end separated by more than 1e-6 pixels.
NormalizedFrame normalize(const SkeletonFrame& f);

// Pose vector for the model input: 17 (x,y) pairs flattened to 34 values,
// still-missing points mapped to the root (0,0).
std::array<double, 2 * kNumKeypoints> pose_vector(const NormalizedFrame& f);

}  // namespace dogpain::skel
