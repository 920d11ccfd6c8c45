#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "notasign/hamnosys.hpp"
#include "notasign/rng.hpp"

namespace notasign {

// Keypoint layout: body(25) + face(70) + left hand(21) + right hand(21).
namespace keypoints {
inline constexpr int kTotal = 137;
inline constexpr int kBody = 25;
inline constexpr int kFace = 70;
inline constexpr int kHand = 21;
inline constexpr int kFaceBegin = 25;   // [25, 95)
inline constexpr int kLeftHandBegin = 95;
inline constexpr int kRightHandBegin = 116;
inline constexpr int kNose = 0;
inline constexpr int kNeck = 1;
inline constexpr int kRightShoulder = 2;
inline constexpr int kRightElbow = 3;
inline constexpr int kRightWrist = 4;
inline constexpr int kLeftShoulder = 5;
inline constexpr int kLeftElbow = 6;
inline constexpr int kLeftWrist = 7;
}  // namespace keypoints

struct PoseSequence {
  int64_t frames = 0;
  std::vector<double> coords;      // frames x 137 x 2, row-major
  std::vector<double> confidence;  // frames x 137
  double fps = 25.0;

  double x(int64_t t, int k) const { return coords[static_cast<size_t>((t * keypoints::kTotal + k) * 2)]; }
  double y(int64_t t, int k) const { return coords[static_cast<size_t>((t * keypoints::kTotal + k) * 2 + 1)]; }
  double conf(int64_t t, int k) const { return confidence[static_cast<size_t>(t * keypoints::kTotal + k)]; }
  void set(int64_t t, int k, double px, double py, double c) {
    coords[static_cast<size_t>((t * keypoints::kTotal + k) * 2)] = px;
    coords[static_cast<size_t>((t * keypoints::kTotal + k) * 2 + 1)] = py;
    confidence[static_cast<size_t>(t * keypoints::kTotal + k)] = c;
  }
  static PoseSequence empty(int64_t frames, double fps = 25.0);
};

struct CoarsePoseSequence {
  int64_t frames = 0;
  int parts = 25;
  std::vector<double> coords;  // frames x parts x 2
  double x(int64_t t, int p) const { return coords[static_cast<size_t>((t * parts + p) * 2)]; }
  double y(int64_t t, int p) const { return coords[static_cast<size_t>((t * parts + p) * 2 + 1)]; }
};

struct Sample {
  std::string id;
  std::string hamnosys;
  PoseSequence pose;
  std::string dataset_tag;  // PJM, DGS, GSL, LSF, synthetic
};

// Pose file: one sample per file, JSON
// {"id", "hamnosys", "fps", "frames": [[[x,y,c] x137] xT]}.
Sample parse_pose_file(const std::string& path);
void write_pose_file(const std::string& path, const Sample& sample);

// 25 named groups of keypoint indices, ordered by name.
struct PartGrouping {
  std::vector<std::pair<std::string, std::vector<int>>> parts;
};

PartGrouping load_part_grouping(const std::string& path);

// Drops frames whose face confidence mass or wrist confidences fall below the
// threshold; remaining frames keep their order.
Sample filter_frames(const Sample& sample, double c_min = 0.2);

// Unweighted mean of member keypoints, per frame per part.
CoarsePoseSequence extract_coarse_gt(const PoseSequence& pose, const PartGrouping& grouping);

struct NormalizationRecord {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double scale = 1.0;
};

// Root-centered, shoulder-scaled frame: subtract the first frame's neck and
// divide by the first frame's shoulder span. Confidences are untouched.
std::pair<PoseSequence, NormalizationRecord> normalize_pose(const PoseSequence& pose);
PoseSequence denormalize_pose(const PoseSequence& pose, const NormalizationRecord& record);

struct ComplexityStats {
  int64_t frame_count = 0;
  double motion = 0.0;    // E: mean per-frame displacement
  double jerk = 0.0;      // J: mean second-order displacement
  double combined = 0.0;  // C, filled by stratify
  std::string bucket;     // simple | medium | complex, filled by stratify
};

// E and J only; requires at least 3 frames.
ComplexityStats complexity_score(const PoseSequence& pose);

// Buckets one dataset's samples by terciles of
// C = z(log(1+T)) + z(log(1+E)) + z(log(1+J)); ties break by sample id.
// Results come back in input order with combined/bucket filled in.
std::vector<ComplexityStats> stratify(const std::vector<std::string>& ids,
                                      std::vector<ComplexityStats> stats);

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string dataset_tag;
  std::string split;  // train | val | test
};

// CSV with header id,path,dataset_tag,split; relative paths resolve against
// the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

struct SyntheticOptions {
  int num_samples = 9;
  int min_frames = 16;
  int max_frames = 32;
  int min_symbols = 3;
  int max_symbols = 10;
  double motion_scale = 1.0;  // scales arm amplitude, finger wiggle and sway
};

// Parametric arm/finger trajectories plus random strings over the vocabulary;
// stands in for the licensed corpora in every test.
std::vector<Sample> make_synthetic_corpus(const Vocabulary& vocab, const SyntheticOptions& options,
                                          Rng& rng);

}  // namespace notasign
