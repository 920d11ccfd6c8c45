#include "notasign/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "notasign/error.hpp"

namespace notasign {

namespace {

using nlohmann::json;

constexpr int kK = keypoints::kTotal;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

PoseSequence PoseSequence::empty(int64_t frames, double fps) {
  PoseSequence p;
  p.frames = frames;
  p.fps = fps;
  p.coords.assign(static_cast<size_t>(frames) * kK * 2, 0.0);
  p.confidence.assign(static_cast<size_t>(frames) * kK, 0.0);
  return p;
}

Sample parse_pose_file(const std::string& path) {
  const json j = load_json(path);
  for (const char* field : {"id", "hamnosys", "fps", "frames"}) {
    if (!j.contains(field)) throw DataError(path + ": missing field '" + field + "'");
  }
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.hamnosys = j.at("hamnosys").get<std::string>();
  if (j.contains("dataset_tag")) s.dataset_tag = j.at("dataset_tag").get<std::string>();
  const auto& frames = j.at("frames");
  if (!frames.is_array()) throw DataError(path + ": 'frames' must be an array");
  s.pose = PoseSequence::empty(static_cast<int64_t>(frames.size()), j.at("fps").get<double>());
  for (size_t t = 0; t < frames.size(); ++t) {
    const auto& frame = frames[t];
    if (!frame.is_array() || frame.size() != kK) {
      throw DataError(path + ": frame " + std::to_string(t) + " has " +
                      std::to_string(frame.is_array() ? frame.size() : 0) + " keypoints, expected " +
                      std::to_string(kK));
    }
    for (int k = 0; k < kK; ++k) {
      const auto& triplet = frame[static_cast<size_t>(k)];
      if (!triplet.is_array() || triplet.size() != 3) {
        throw DataError(path + ": frame " + std::to_string(t) + " keypoint " + std::to_string(k) +
                        " is not an [x, y, c] triplet");
      }
      s.pose.set(static_cast<int64_t>(t), k, triplet[0].get<double>(), triplet[1].get<double>(),
                 triplet[2].get<double>());
    }
  }
  return s;
}

void write_pose_file(const std::string& path, const Sample& sample) {
  json frames = json::array();
  for (int64_t t = 0; t < sample.pose.frames; ++t) {
    json frame = json::array();
    for (int k = 0; k < kK; ++k) {
      frame.push_back({sample.pose.x(t, k), sample.pose.y(t, k), sample.pose.conf(t, k)});
    }
    frames.push_back(std::move(frame));
  }
  json j;
  j["id"] = sample.id;
  j["hamnosys"] = sample.hamnosys;
  j["fps"] = static_cast<int64_t>(std::llround(sample.pose.fps));
  j["dataset_tag"] = sample.dataset_tag;
  j["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump() << "\n";
}

PartGrouping load_part_grouping(const std::string& path) {
  const json j = load_json(path);
  if (!j.is_object()) throw DataError(path + ": grouping must be a JSON object");
  PartGrouping g;
  for (auto it = j.begin(); it != j.end(); ++it) {  // nlohmann iterates keys sorted
    std::vector<int> indices;
    for (const auto& v : it.value()) {
      const int idx = v.get<int>();
      if (idx < 0 || idx >= kK) {
        throw DataError(path + ": part '" + it.key() + "' index " + std::to_string(idx) +
                        " out of range [0, " + std::to_string(kK) + ")");
      }
      indices.push_back(idx);
    }
    if (indices.empty()) throw DataError(path + ": part '" + it.key() + "' is empty");
    g.parts.emplace_back(it.key(), std::move(indices));
  }
  if (g.parts.size() != 25) {
    throw DataError(path + ": grouping has " + std::to_string(g.parts.size()) +
                    " parts, expected 25");
  }
  return g;
}

Sample filter_frames(const Sample& sample, double c_min) {
  const PoseSequence& pose = sample.pose;
  std::vector<int64_t> kept;
  for (int64_t t = 0; t < pose.frames; ++t) {
    double face_mass = 0.0;
    for (int k = keypoints::kFaceBegin; k < keypoints::kFaceBegin + keypoints::kFace; ++k) {
      face_mass += pose.conf(t, k);
    }
    const double wrists = pose.conf(t, keypoints::kRightWrist) + pose.conf(t, keypoints::kLeftWrist);
    const bool drop = face_mass <= c_min * keypoints::kFace || wrists <= c_min;
    if (!drop) kept.push_back(t);
  }
  if (kept.empty()) {
    throw DataError("filter_frames: sample '" + sample.id + "' has no usable frames");
  }
  Sample out = sample;
  out.pose = PoseSequence::empty(static_cast<int64_t>(kept.size()), pose.fps);
  for (size_t i = 0; i < kept.size(); ++i) {
    const int64_t t = kept[i];
    for (int k = 0; k < kK; ++k) {
      out.pose.set(static_cast<int64_t>(i), k, pose.x(t, k), pose.y(t, k), pose.conf(t, k));
    }
  }
  return out;
}

CoarsePoseSequence extract_coarse_gt(const PoseSequence& pose, const PartGrouping& grouping) {
  CoarsePoseSequence coarse;
  coarse.frames = pose.frames;
  coarse.parts = static_cast<int>(grouping.parts.size());
  coarse.coords.assign(static_cast<size_t>(coarse.frames) * coarse.parts * 2, 0.0);
  for (int64_t t = 0; t < pose.frames; ++t) {
    for (size_t p = 0; p < grouping.parts.size(); ++p) {
      const auto& members = grouping.parts[p].second;
      double sx = 0.0, sy = 0.0;
      for (int k : members) {
        sx += pose.x(t, k);
        sy += pose.y(t, k);
      }
      const double count = static_cast<double>(members.size());
      coarse.coords[(static_cast<size_t>(t) * coarse.parts + p) * 2] = sx / count;
      coarse.coords[(static_cast<size_t>(t) * coarse.parts + p) * 2 + 1] = sy / count;
    }
  }
  return coarse;
}

std::pair<PoseSequence, NormalizationRecord> normalize_pose(const PoseSequence& pose) {
  if (pose.frames == 0) throw DataError("normalize_pose: empty sequence");
  NormalizationRecord rec;
  rec.origin_x = pose.x(0, keypoints::kNeck);
  rec.origin_y = pose.y(0, keypoints::kNeck);
  const double dx = pose.x(0, keypoints::kRightShoulder) - pose.x(0, keypoints::kLeftShoulder);
  const double dy = pose.y(0, keypoints::kRightShoulder) - pose.y(0, keypoints::kLeftShoulder);
  rec.scale = std::hypot(dx, dy);
  if (!(rec.scale > 1e-12)) {
    throw DataError("normalize_pose: zero shoulder span in the first frame");
  }
  PoseSequence out = pose;
  const double inv = 1.0 / rec.scale;
  for (size_t i = 0; i < out.coords.size(); i += 2) {
    out.coords[i] = (out.coords[i] - rec.origin_x) * inv;
    out.coords[i + 1] = (out.coords[i + 1] - rec.origin_y) * inv;
  }
  return {std::move(out), rec};
}

PoseSequence denormalize_pose(const PoseSequence& pose, const NormalizationRecord& record) {
  PoseSequence out = pose;
  for (size_t i = 0; i < out.coords.size(); i += 2) {
    out.coords[i] = out.coords[i] * record.scale + record.origin_x;
    out.coords[i + 1] = out.coords[i + 1] * record.scale + record.origin_y;
  }
  return out;
}

ComplexityStats complexity_score(const PoseSequence& pose) {
  if (pose.frames < 3) {
    throw DataError("complexity_score: need at least 3 frames, got " +
                    std::to_string(pose.frames));
  }
  ComplexityStats stats;
  stats.frame_count = pose.frames;

  auto mean_norm = [&](int64_t t, auto&& delta) {
    // Valid set: keypoints with positive confidence at frame t.
    double sum = 0.0;
    int count = 0;
    for (int k = 0; k < kK; ++k) {
      if (pose.conf(t, k) > 0.0) {
        sum += delta(t, k);
        ++count;
      }
    }
    return count == 0 ? 0.0 : sum / count;
  };

  double e = 0.0;
  for (int64_t t = 1; t < pose.frames; ++t) {
    e += mean_norm(t, [&](int64_t tt, int k) {
      return std::hypot(pose.x(tt, k) - pose.x(tt - 1, k), pose.y(tt, k) - pose.y(tt - 1, k));
    });
  }
  stats.motion = e / static_cast<double>(pose.frames - 1);

  double j = 0.0;
  for (int64_t t = 2; t < pose.frames; ++t) {
    j += mean_norm(t, [&](int64_t tt, int k) {
      const double ax = pose.x(tt, k) - 2.0 * pose.x(tt - 1, k) + pose.x(tt - 2, k);
      const double ay = pose.y(tt, k) - 2.0 * pose.y(tt - 1, k) + pose.y(tt - 2, k);
      return std::hypot(ax, ay);
    });
  }
  stats.jerk = j / static_cast<double>(pose.frames - 2);
  return stats;
}

std::vector<ComplexityStats> stratify(const std::vector<std::string>& ids,
                                      std::vector<ComplexityStats> stats) {
  const size_t n = stats.size();
  if (ids.size() != n) throw std::invalid_argument("stratify: ids and stats sizes differ");
  if (n < 3) {
    throw DataError("stratify: need at least 3 samples per dataset, got " + std::to_string(n));
  }

  auto zscores = [n](const std::vector<double>& raw) {
    double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    std::vector<double> z(n, 0.0);
    if (sd > 1e-12) {
      for (size_t i = 0; i < n; ++i) z[i] = (raw[i] - mean) / sd;
    }
    return z;
  };

  std::vector<double> lt(n), le(n), lj(n);
  for (size_t i = 0; i < n; ++i) {
    lt[i] = std::log1p(static_cast<double>(stats[i].frame_count));
    le[i] = std::log1p(stats[i].motion);
    lj[i] = std::log1p(stats[i].jerk);
  }
  const std::vector<double> zt = zscores(lt), ze = zscores(le), zj = zscores(lj);
  for (size_t i = 0; i < n; ++i) stats[i].combined = zt[i] + ze[i] + zj[i];

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (stats[a].combined != stats[b].combined) return stats[a].combined < stats[b].combined;
    return ids[a] < ids[b];
  });

  // Tercile sizes differ by at most one; simple gets the remainder first.
  const size_t n_simple = (n + 2) / 3;
  const size_t n_complex = n / 3;
  for (size_t rank = 0; rank < n; ++rank) {
    ComplexityStats& s = stats[order[rank]];
    if (rank < n_simple) {
      s.bucket = "simple";
    } else if (rank >= n - n_complex) {
      s.bucket = "complex";
    } else {
      s.bucket = "medium";
    }
  }
  return stats;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  bool first = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      first = false;
      if (fields.size() >= 1 && fields[0] == "id") continue;  // header
    }
    if (fields.size() != 4) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected id,path,dataset_tag,split");
    }
    ManifestEntry e{fields[0], fields[1], fields[2], fields[3]};
    const std::filesystem::path p(e.path);
    if (p.is_relative()) e.path = (base / p).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path);
  out << "id,path,dataset_tag,split\n";
  for (const auto& e : entries) {
    out << e.id << "," << e.path << "," << e.dataset_tag << "," << e.split << "\n";
  }
}

namespace {

// Upright rest skeleton on a 512x512 canvas, y pointing down.
void base_skeleton(double* xy /*137*2*/) {
  const double body[25][2] = {
      {256, 120}, {256, 170}, {196, 175}, {170, 250}, {165, 320}, {316, 175}, {342, 250},
      {347, 320}, {256, 330}, {226, 333}, {222, 420}, {220, 500}, {286, 333}, {290, 420},
      {292, 500}, {240, 105}, {272, 105}, {225, 115}, {287, 115}, {296, 508}, {301, 508},
      {288, 502}, {216, 508}, {211, 508}, {224, 502}};
  for (int k = 0; k < 25; ++k) {
    xy[k * 2] = body[k][0];
    xy[k * 2 + 1] = body[k][1];
  }
  for (int i = 0; i < keypoints::kFace; ++i) {
    const double a = 2.0 * 3.141592653589793 * i / keypoints::kFace;
    xy[(keypoints::kFaceBegin + i) * 2] = 256.0 + 28.0 * std::cos(a);
    xy[(keypoints::kFaceBegin + i) * 2 + 1] = 115.0 + 34.0 * std::sin(a);
  }
  auto hand = [&](int begin, double wx, double wy, double dir) {
    xy[begin * 2] = wx;
    xy[begin * 2 + 1] = wy + 4.0;
    for (int f = 0; f < 5; ++f) {
      const double spread = dir * (f - 2) * 0.22;
      for (int joint = 0; joint < 4; ++joint) {
        const double len = 8.0 * (joint + 1);
        const int idx = begin + 1 + f * 4 + joint;
        xy[idx * 2] = wx + std::sin(spread) * len;
        xy[idx * 2 + 1] = wy + 6.0 + std::cos(spread) * len;
      }
    }
  };
  hand(keypoints::kLeftHandBegin, 347, 320, 1.0);
  hand(keypoints::kRightHandBegin, 165, 320, -1.0);
}

}  // namespace

std::vector<Sample> make_synthetic_corpus(const Vocabulary& vocab, const SyntheticOptions& options,
                                          Rng& rng) {
  if (vocab.size_n() == 0) throw DataError("make_synthetic_corpus: empty vocabulary");
  std::vector<double> base(static_cast<size_t>(kK) * 2);
  base_skeleton(base.data());

  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(options.num_samples));
  for (int s = 0; s < options.num_samples; ++s) {
    Sample sample;
    {
      std::ostringstream id;
      id << "synthetic_" << std::setw(4) << std::setfill('0') << s;
      sample.id = id.str();
    }
    sample.dataset_tag = "synthetic";
    const int symbols = options.min_symbols + rng.uniform_int(options.max_symbols - options.min_symbols + 1);
    std::vector<uint32_t> cps;
    for (int i = 0; i < symbols; ++i) {
      cps.push_back(vocab.symbols()[static_cast<size_t>(rng.uniform_int(vocab.size_n()))]);
    }
    sample.hamnosys = utf8_encode(cps);

    const int64_t frames = options.min_frames + rng.uniform_int(options.max_frames - options.min_frames + 1);
    sample.pose = PoseSequence::empty(frames);

    // Per-sample motion parameters: each arm swings on its own ellipse, the
    // fingers wiggle, the whole body sways slightly.
    struct Arm {
      double ax, ay, freq, phase;
    };
    const double ms = options.motion_scale;
    auto draw_arm = [&] {
      return Arm{ms * rng.uniform(10.0, 60.0), ms * rng.uniform(5.0, 40.0),
                 rng.uniform(0.5, 2.5), rng.uniform(0.0, 6.283185307179586)};
    };
    const Arm right = draw_arm();
    const Arm left = draw_arm();
    const double wiggle = ms * rng.uniform(0.0, 6.0);
    const double sway = ms * rng.uniform(0.0, 4.0);
    const double sway_freq = rng.uniform(0.3, 1.2);

    for (int64_t t = 0; t < frames; ++t) {
      const double phase = 2.0 * 3.141592653589793 * static_cast<double>(t) / static_cast<double>(frames);
      const double body_dx = sway * std::sin(sway_freq * phase);
      std::vector<double> xy = base;
      for (int k = 0; k < kK; ++k) xy[static_cast<size_t>(k) * 2] += body_dx;

      auto move_arm = [&](const Arm& arm, int elbow, int wrist, int hand_begin) {
        const double dx = arm.ax * std::sin(arm.freq * phase + arm.phase);
        const double dy = arm.ay * std::cos(arm.freq * phase + arm.phase);
        xy[static_cast<size_t>(elbow) * 2] += 0.5 * dx;
        xy[static_cast<size_t>(elbow) * 2 + 1] += 0.5 * dy;
        xy[static_cast<size_t>(wrist) * 2] += dx;
        xy[static_cast<size_t>(wrist) * 2 + 1] += dy;
        for (int i = 0; i < keypoints::kHand; ++i) {
          const int idx = hand_begin + i;
          xy[static_cast<size_t>(idx) * 2] += dx;
          xy[static_cast<size_t>(idx) * 2 + 1] += dy;
          if (i > 0) {
            const int joint = (i - 1) % 4;
            xy[static_cast<size_t>(idx) * 2] +=
                wiggle * 0.25 * (joint + 1) * std::sin(3.0 * arm.freq * phase + i);
          }
        }
      };
      move_arm(right, keypoints::kRightElbow, keypoints::kRightWrist, keypoints::kRightHandBegin);
      move_arm(left, keypoints::kLeftElbow, keypoints::kLeftWrist, keypoints::kLeftHandBegin);

      for (int k = 0; k < kK; ++k) {
        sample.pose.set(t, k, xy[static_cast<size_t>(k) * 2], xy[static_cast<size_t>(k) * 2 + 1], 1.0);
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace notasign
