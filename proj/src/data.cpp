#include "dogpain/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dogpain/errors.hpp"
#include "dogpain/image.hpp"
#include "dogpain/rng.hpp"

namespace dogpain::data {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (subjects_per_class < 1 || frames_per_video < 1)
    throw ConfigError("synth: subject and frame counts must be positive");
  if (image_size < 16) throw ConfigError("synth: image size must be at least 16");
  if (gait_amplitude <= 0 || attenuation < 0 || head_bob < 0 || noise_sigma < 0)
    throw ConfigError("synth: magnitudes must be non-negative (amplitude positive)");
}

std::vector<DetectionRecord> filter_detections(std::vector<DetectionRecord> records,
                                               double threshold) {
  std::map<int, DetectionRecord> best;
  for (const auto& r : records) {
    if (!(r.confidence > threshold)) continue;  // strictly greater, per protocol
    auto it = best.find(r.frame_index);
    if (it == best.end() || r.confidence > it->second.confidence) best[r.frame_index] = r;
  }
  std::vector<DetectionRecord> out;
  out.reserve(best.size());
  for (auto& [frame, rec] : best) out.push_back(rec);
  return out;
}

Bbox expand_bbox(const Bbox& b, double factor, double img_w, double img_h) {
  const double cx = (b.x1 + b.x2) / 2.0, cy = (b.y1 + b.y2) / 2.0;
  const double hw = b.width() * (1.0 + factor) / 2.0;
  const double hh = b.height() * (1.0 + factor) / 2.0;
  Bbox e{cx - hw, cy - hh, cx + hw, cy + hh};
  e.x1 = std::max(0.0, e.x1);
  e.y1 = std::max(0.0, e.y1);
  e.x2 = std::min(img_w, e.x2);
  e.y2 = std::min(img_h, e.y2);
  return e;
}

std::vector<int> slice_starts(int n_frames) {
  std::vector<int> starts;
  for (int s = 0; s + kClipLen <= n_frames; s += kClipStride) starts.push_back(s);
  return starts;
}

FoldPlan make_splits(const std::vector<VideoEntry>& videos, double test_fraction, int n_folds,
                     std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("make_splits: need at least 2 folds");

  // one subject per video; a subject seen twice must keep one label
  std::map<std::string, int> subject_label;
  for (const auto& v : videos) {
    auto [it, inserted] = subject_label.emplace(v.subject_id, v.label);
    if (!inserted && it->second != v.label)
      throw ConfigError("make_splits: subject " + v.subject_id + " appears with both labels");
  }
  std::vector<std::string> by_class[2];
  for (const auto& [sid, label] : subject_label) by_class[label ? 1 : 0].push_back(sid);

  const int min_subjects = 7;
  for (int c = 0; c < 2; ++c) {
    if (static_cast<int>(by_class[c].size()) < min_subjects)
      throw ConfigError("make_splits: need at least " + std::to_string(min_subjects) +
                        " subjects per class, class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()));
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(n_folds));
  for (int c = 0; c < 2; ++c) {
    auto& pool = by_class[c];
    std::sort(pool.begin(), pool.end());  // canonical order before the seeded shuffle
    RandomStream rs = RandomStream::derive(seed, {0x5eedULL, static_cast<std::uint64_t>(c)});
    rs.shuffle(pool);

    const auto n = static_cast<long>(pool.size());
    const long test_n = std::max<long>(1, std::llround(n * test_fraction));
    for (long i = 0; i < test_n; ++i) plan.test_subjects.push_back(pool[static_cast<std::size_t>(i)]);

    // remaining subjects: validation chunks partition the pool across folds
    std::vector<std::string> rest(pool.begin() + test_n, pool.end());
    const auto m = static_cast<long>(rest.size());
    const long base = m / n_folds, extra = m % n_folds;
    long cursor = 0;
    for (int f = 0; f < n_folds; ++f) {
      const long take = base + (f < extra ? 1 : 0);
      for (long i = 0; i < m; ++i) {
        const auto& sid = rest[static_cast<std::size_t>(i)];
        if (i >= cursor && i < cursor + take)
          plan.folds[f].validation_subjects.push_back(sid);
        else
          plan.folds[f].train_subjects.push_back(sid);
      }
      cursor += take;
    }
  }
  std::sort(plan.test_subjects.begin(), plan.test_subjects.end());
  for (auto& fold : plan.folds) {
    std::sort(fold.train_subjects.begin(), fold.train_subjects.end());
    std::sort(fold.validation_subjects.begin(), fold.validation_subjects.end());
  }
  return plan;
}

// ---------------------------------------------------------------------------
// interchange files
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_real(const std::string& tok, const fs::path& path, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not a number: '" + tok + "'");
  }
}

int parse_int(const std::string& tok, const fs::path& path, int line_no) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not an integer: '" + tok +
                     "'");
  }
}

void write_real(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  os << buf;
}

std::ifstream open_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

}  // namespace

std::vector<skel::SkeletonFrame> load_keypoints(const fs::path& path) {
  auto is = open_text(path);
  std::string line;
  int line_no = 0;

  if (!std::getline(is, line)) throw ParseError(path.string() + ":1: empty keypoint file");
  ++line_no;
  auto header = split_ws(line);
  if (header.size() != 2 + skel::kNumKeypoints || header[0] != "kp")
    throw ParseError(path.string() + ":1: expected keypoint header 'kp v1 <17 names>'");
  if (header[1] != "v1")
    throw VersionError(path.string() + ": keypoint schema " + header[1] + ", this build reads v1");
  for (int j = 0; j < skel::kNumKeypoints; ++j)
    if (header[2 + j] != skel::keypoint_name(j))
      throw ParseError(path.string() + ":1: keypoint order mismatch at slot " + std::to_string(j) +
                       ": '" + header[2 + j] + "' (expected '" + skel::keypoint_name(j) + "')");

  std::vector<skel::SkeletonFrame> frames;
  while (std::getline(is, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 1 + 3 * skel::kNumKeypoints)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(skel::kNumKeypoints) + " keypoints (frame index + " +
                       std::to_string(3 * skel::kNumKeypoints) + " fields), got " +
                       std::to_string(tokens.size() - 1 < 0 ? 0 : (tokens.size() - 1) / 3) +
                       " keypoints");
    skel::SkeletonFrame f;
    f.frame_index = parse_int(tokens[0], path, line_no);
    for (int j = 0; j < skel::kNumKeypoints; ++j) {
      const double x = parse_real(tokens[1 + 3 * j], path, line_no);
      const double y = parse_real(tokens[2 + 3 * j], path, line_no);
      const int v = parse_int(tokens[3 + 3 * j], path, line_no);
      if (v != 0 && v != 1)
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": visibility flag must be 0 or 1, got " + tokens[3 + 3 * j]);
      f.points[j] = skel::Keypoint{x, y, v ? skel::Vis::visible : skel::Vis::missing};
      if (v && !(std::isfinite(x) && std::isfinite(y)))
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": visible keypoint with non-finite coordinates");
    }
    frames.push_back(f);
  }
  return frames;
}

void save_keypoints(const fs::path& path, const std::vector<skel::SkeletonFrame>& frames) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "kp v1";
  for (int j = 0; j < skel::kNumKeypoints; ++j) os << ' ' << skel::keypoint_name(j);
  os << '\n';
  for (const auto& f : frames) {
    os << f.frame_index;
    for (int j = 0; j < skel::kNumKeypoints; ++j) {
      const auto& p = f.points[j];
      os << ' ';
      write_real(os, p.present() ? p.x : 0.0);
      os << ' ';
      write_real(os, p.present() ? p.y : 0.0);
      os << ' ' << (p.present() ? 1 : 0);
    }
    os << '\n';
  }
  if (!os) throw IoError("short write on " + path.string());
}

std::vector<DetectionRecord> load_detections(const fs::path& path) {
  auto is = open_text(path);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw ParseError(path.string() + ":1: empty detection file");
  ++line_no;
  auto header = split_ws(line);
  if (header.size() != 2 || header[0] != "det")
    throw ParseError(path.string() + ":1: expected detection header 'det v1'");
  if (header[1] != "v1")
    throw VersionError(path.string() + ": detection schema " + header[1] + ", this build reads v1");

  std::vector<DetectionRecord> records;
  while (std::getline(is, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 6)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 6 fields (frame x1 y1 x2 y2 confidence), got " +
                       std::to_string(tokens.size()));
    DetectionRecord r;
    r.frame_index = parse_int(tokens[0], path, line_no);
    r.bbox = Bbox{parse_real(tokens[1], path, line_no), parse_real(tokens[2], path, line_no),
                  parse_real(tokens[3], path, line_no), parse_real(tokens[4], path, line_no)};
    r.confidence = parse_real(tokens[5], path, line_no);
    if (!(r.bbox.x1 < r.bbox.x2) || !(r.bbox.y1 < r.bbox.y2))
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": degenerate bounding box");
    if (r.confidence < 0.0 || r.confidence > 1.0)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": confidence outside [0,1]");
    records.push_back(r);
  }
  return records;
}

void save_detections(const fs::path& path, const std::vector<DetectionRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "det v1\n";
  for (const auto& r : records) {
    os << r.frame_index << ' ';
    write_real(os, r.bbox.x1);
    os << ' ';
    write_real(os, r.bbox.y1);
    os << ' ';
    write_real(os, r.bbox.x2);
    os << ' ';
    write_real(os, r.bbox.y2);
    os << ' ';
    write_real(os, r.confidence);
    os << '\n';
  }
  if (!os) throw IoError("short write on " + path.string());
}

std::vector<VideoEntry> load_manifest(const fs::path& path) {
  auto is = open_text(path);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw ParseError(path.string() + ":1: empty manifest");
  ++line_no;
  auto header = split_ws(line);
  if (header.size() != 2 || header[0] != "manifest")
    throw ParseError(path.string() + ":1: expected manifest header 'manifest v1'");
  if (header[1] != "v1")
    throw VersionError(path.string() + ": manifest schema " + header[1] + ", this build reads v1");

  const fs::path base = path.parent_path();
  std::vector<VideoEntry> videos;
  while (std::getline(is, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 6)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 6 fields (subject label subtype frame_dir keypoints detections)");
    VideoEntry v;
    v.subject_id = tokens[0];
    if (tokens[1] == "pain") v.label = 1;
    else if (tokens[1] == "no-pain") v.label = 0;
    else
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": label must be 'pain' or 'no-pain', got '" + tokens[1] + "'");
    if (tokens[2] != "orthopedic" && tokens[2] != "neurological" && tokens[2] != "none")
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown pain subtype '" + tokens[2] + "'");
    v.pain_subtype = tokens[2];
    v.frame_dir = base / tokens[3];
    v.keypoint_path = base / tokens[4];
    v.detection_path = base / tokens[5];
    for (const fs::path* p : {&v.frame_dir, &v.keypoint_path, &v.detection_path})
      if (!fs::exists(*p))
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": referenced path missing: " +
                      p->string());
    videos.push_back(std::move(v));
  }
  return videos;
}

void save_manifest(const fs::path& path, const std::vector<VideoEntry>& videos) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "manifest v1\n";
  const fs::path base = path.parent_path();
  for (const auto& v : videos) {
    os << v.subject_id << ' ' << (v.label ? "pain" : "no-pain") << ' ' << v.pain_subtype << ' '
       << fs::relative(v.frame_dir, base).generic_string() << ' '
       << fs::relative(v.keypoint_path, base).generic_string() << ' '
       << fs::relative(v.detection_path, base).generic_string() << '\n';
  }
  if (!os) throw IoError("short write on " + path.string());
}

fs::path frame_image_path(const fs::path& frame_dir, int frame_index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06d.ppm", frame_index);
  return frame_dir / name;
}

// ---------------------------------------------------------------------------
// clip assembly
// ---------------------------------------------------------------------------

template <typename T>
std::vector<Clip<T>> assemble_clips(const VideoEntry& video, int image_size, int* dropped) {
  auto kp = load_keypoints(video.keypoint_path);
  auto det = filter_detections(load_detections(video.detection_path));
  std::map<int, const DetectionRecord*> det_by_frame;
  for (const auto& d : det) det_by_frame[d.frame_index] = &d;

  if (dropped) *dropped = 0;
  std::vector<Clip<T>> clips;
  const std::size_t hs = static_cast<std::size_t>(image_size);
  for (int start : slice_starts(static_cast<int>(kp.size()))) {
    std::vector<skel::SkeletonFrame> span(kp.begin() + start, kp.begin() + start + kClipLen);
    auto repaired = skel::repair(span);
    if (repaired.clip_dropped) {
      if (dropped) ++*dropped;
      continue;
    }

    Clip<T> clip;
    clip.label = video.label;
    clip.subject_id = video.subject_id;
    clip.video_id = video.subject_id;
    clip.start_frame = kp[static_cast<std::size_t>(start)].frame_index;
    clip.poses = num::Tensor<T>({kClipLen, 2 * skel::kNumKeypoints});
    clip.frames = num::Tensor<T>({kClipLen, 3, hs, hs});

    bool ok = true;
    for (int t = 0; t < kClipLen && ok; ++t) {
      skel::NormalizedFrame nf;
      try {
        nf = skel::normalize(repaired.frames[t]);
      } catch (const DegeneratePoseError&) {
        ok = false;  // excluded frame invalidates the fixed-length clip
        break;
      }
      auto pv = skel::pose_vector(nf);
      for (int i = 0; i < 2 * skel::kNumKeypoints; ++i)
        clip.poses.at2(t, static_cast<std::size_t>(i)) = static_cast<T>(pv[static_cast<std::size_t>(i)]);

      const int fidx = repaired.frames[t].frame_index;
      img::Image im = img::read_ppm(frame_image_path(video.frame_dir, fidx));
      num::Tensor<T> full = img::to_tensor<T>(im);
      num::Tensor<T> cropped;
      auto it = det_by_frame.find(fidx);
      if (it != det_by_frame.end()) {
        Bbox e = expand_bbox(it->second->bbox, kBboxExpandFactor, im.width, im.height);
        const auto cx1 = static_cast<std::size_t>(std::floor(e.x1));
        const auto cy1 = static_cast<std::size_t>(std::floor(e.y1));
        const auto cx2 = std::min<std::size_t>(im.width, static_cast<std::size_t>(std::ceil(e.x2)));
        const auto cy2 = std::min<std::size_t>(im.height, static_cast<std::size_t>(std::ceil(e.y2)));
        if (cx2 > cx1 + 1 && cy2 > cy1 + 1) {
          cropped = num::Tensor<T>({3, cy2 - cy1, cx2 - cx1});
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = cy1; y < cy2; ++y)
              for (std::size_t x = cx1; x < cx2; ++x)
                cropped.at3(c, y - cy1, x - cx1) = full.at3(c, y, x);
        }
      }
      const num::Tensor<T>& src = cropped.empty() ? full : cropped;
      num::Tensor<T> resized = img::bilinear_resize<T>(src, hs, hs);
      std::copy(resized.data(), resized.data() + resized.size(),
                clip.frames.data() + static_cast<std::size_t>(t) * 3 * hs * hs);
    }
    if (ok) clips.push_back(std::move(clip));
    else if (dropped) ++*dropped;
  }
  return clips;
}

template std::vector<Clip<float>> assemble_clips<float>(const VideoEntry&, int, int*);
template std::vector<Clip<double>> assemble_clips<double>(const VideoEntry&, int, int*);

}  // namespace dogpain::data
