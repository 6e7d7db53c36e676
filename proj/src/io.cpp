#include "usspine/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace usspine {

namespace {

constexpr std::array<char, 8> kWeightMagic = {'U', 'S', 'S', 'P', 'S', 'H', 'N', '\0'};
constexpr std::array<char, 8> kVolumeMagic = {'U', 'S', 'S', 'P', 'V', 'O', 'L', '\0'};
constexpr std::uint32_t kWeightVersion = 1;
constexpr std::uint32_t kVolumeVersion = 1;
constexpr int kArchiveVersion = 1;

std::string frame_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu.pgm", prefix, i);
  return buf;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

long parse_int(std::string_view text) {
  long v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw std::runtime_error("expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

// Little-endian binary helpers.
class Writer {
 public:
  explicit Writer(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <class T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U u = std::bit_cast<U>(v);
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    bytes(b, sizeof b);
  }
  void finish(const fs::path& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw std::runtime_error("truncated file: " + path_.string());
  }
  template <class T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char b[sizeof(U)];
    bytes(b, sizeof b);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(b[i]) << (8 * i);
    return std::bit_cast<T>(u);
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  fs::path path_;
};

void write_landmark_fields(std::vector<std::string>& row, const LandmarkSet& lm) {
  for (const auto& p : lm.points) {
    row.push_back(format_real(p.x));
    row.push_back(format_real(p.y));
  }
}

void read_landmark_fields(const CsvTable& t, const std::vector<std::string>& row, LandmarkSet& lm) {
  static constexpr const char* names[] = {"la0", "la1", "sp", "la2", "la3"};
  for (std::size_t k = 0; k < kNumLandmarks; ++k) {
    lm.points[k].x = parse_real(row.at(t.column(std::string(names[k]) + "_x")));
    lm.points[k].y = parse_real(row.at(t.column(std::string(names[k]) + "_y")));
  }
}

std::vector<std::string> landmark_header() {
  return {"la0_x", "la0_y", "la1_x", "la1_y", "sp_x", "sp_y", "la2_x", "la2_y", "la3_x", "la3_y"};
}

}  // namespace

std::string format_real(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("format_real: non-finite value");
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_real: conversion failed");
  return std::string(buf, p);
}

double parse_real(std::string_view text) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw std::runtime_error("expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::runtime_error("csv: missing column '" + std::string(name) + "'");
}

void write_csv(const fs::path& path, const CsvTable& table) {
  std::string text;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) text += ',';
      text += row[i];
    }
    text += '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) throw std::invalid_argument("write_csv: row width differs from header");
    emit(r);
  }
  write_text(path, text);
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());
  t.header = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line, ','));
    if (t.rows.back().size() != t.header.size()) {
      throw std::runtime_error("csv: row " + std::to_string(t.rows.size()) + " of " + path.string() +
                               " has the wrong number of fields");
    }
  }
  return t;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_poses_csv(const fs::path& path, const std::vector<FramePose>& poses) {
  CsvTable t{{"frame_index", "tx", "ty", "tz", "qw", "qx", "qy", "qz"}, {}};
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    t.rows.push_back({std::to_string(i), format_real(p.translation[0]), format_real(p.translation[1]),
                      format_real(p.translation[2]), format_real(p.rotation[0]), format_real(p.rotation[1]),
                      format_real(p.rotation[2]), format_real(p.rotation[3])});
  }
  write_csv(path, t);
}

std::vector<FramePose> read_poses_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<FramePose> poses;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (parse_int(r[t.column("frame_index")]) != static_cast<long>(i)) {
      throw std::runtime_error("poses: frame_index out of sequence at row " + std::to_string(i));
    }
    FramePose p;
    p.translation = {parse_real(r[t.column("tx")]), parse_real(r[t.column("ty")]), parse_real(r[t.column("tz")])};
    p.rotation = {parse_real(r[t.column("qw")]), parse_real(r[t.column("qx")]), parse_real(r[t.column("qy")]),
                  parse_real(r[t.column("qz")])};
    if (!p.is_unit()) throw std::runtime_error("poses: quaternion at row " + std::to_string(i) + " is not unit length");
    poses.push_back(p);
  }
  return poses;
}

void write_landmarks_csv(const fs::path& path, const std::vector<LandmarkSet>& sets) {
  CsvTable t{{"frame_index", "valid", "reason"}, {}};
  for (const auto& h : landmark_header()) t.header.push_back(h);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), sets[i].valid ? "1" : "0",
                                 sets[i].reason ? std::string(rejection_name(*sets[i].reason)) : ""};
    write_landmark_fields(row, sets[i]);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<LandmarkSet> read_landmarks_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<LandmarkSet> out;
  for (const auto& r : t.rows) {
    LandmarkSet lm;
    lm.valid = r[t.column("valid")] == "1";
    const std::string& reason = r[t.column("reason")];
    if (!reason.empty()) {
      lm.reason = parse_rejection(reason);
      if (!lm.reason) throw std::runtime_error("landmarks: unknown rejection reason '" + reason + "'");
    }
    read_landmark_fields(t, r, lm);
    out.push_back(lm);
  }
  return out;
}

void write_sp_points_csv(const fs::path& path, const std::vector<SpPoint>& points) {
  CsvTable t{{"x_px", "z_px", "source_frame"}, {}};
  for (const auto& p : points) t.rows.push_back({format_real(p.x), format_real(p.z), std::to_string(p.source_frame)});
  write_csv(path, t);
}

std::vector<SpPoint> read_sp_points_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<SpPoint> out;
  for (const auto& r : t.rows) {
    out.push_back({parse_real(r[t.column("x_px")]), parse_real(r[t.column("z_px")]),
                   static_cast<int>(parse_int(r[t.column("source_frame")]))});
  }
  return out;
}

void write_segments_csv(const fs::path& path, const std::vector<AngleSegment>& segments) {
  CsvTable t{{"segment", "start", "end", "degrees"}, {}};
  for (std::size_t i = 0; i < segments.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_real(segments[i].start), format_real(segments[i].end),
                      format_real(segments[i].degrees)});
  }
  write_csv(path, t);
}

std::vector<AngleSegment> read_segments_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<AngleSegment> out;
  for (const auto& r : t.rows) {
    out.push_back({parse_real(r[t.column("start")]), parse_real(r[t.column("end")]), parse_real(r[t.column("degrees")])});
  }
  return out;
}

void write_archive(const fs::path& dir, const ScanArchive& a) {
  const std::size_t n = a.frames.size();
  if (a.poses.size() != n) throw std::invalid_argument("write_archive: frame and pose counts differ");
  if (!a.masks.empty() && a.masks.size() != n) throw std::invalid_argument("write_archive: mask count differs");
  if (!a.labels.empty() && (a.labels.size() != n || a.on_vertebra.size() != n)) {
    throw std::invalid_argument("write_archive: label count differs");
  }
  fs::create_directories(dir / "frames");
  if (!a.masks.empty()) fs::create_directories(dir / "masks");

  std::string m;
  m += "format usspine-scan\n";
  m += "version " + std::to_string(kArchiveVersion) + "\n";
  m += "frame_count " + std::to_string(n) + "\n";
  m += "spacing_x " + format_real(a.spacing.x) + "\n";
  m += "spacing_y " + format_real(a.spacing.y) + "\n";
  m += "poses poses.csv\n";
  if (!a.labels.empty()) m += "labels labels.csv\n";
  m += "frames " + std::to_string(n) + "\n";
  for (std::size_t i = 0; i < n; ++i) m += "frames/" + frame_name("frame", i) + "\n";
  if (!a.masks.empty()) {
    m += "masks " + std::to_string(n) + "\n";
    for (std::size_t i = 0; i < n; ++i) m += "masks/" + frame_name("mask", i) + "\n";
  }
  write_text(dir / "manifest.txt", m);

  for (std::size_t i = 0; i < n; ++i) {
    write_pgm(dir / "frames" / frame_name("frame", i), a.frames[i]);
    if (!a.masks.empty()) write_pgm(dir / "masks" / frame_name("mask", i), a.masks[i]);
  }
  write_poses_csv(dir / "poses.csv", a.poses);
  if (!a.labels.empty()) {
    CsvTable t{{"frame_index", "on_vertebra"}, {}};
    for (const auto& h : landmark_header()) t.header.push_back(h);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> row{std::to_string(i), a.on_vertebra[i] ? "1" : "0"};
      write_landmark_fields(row, a.labels[i]);
      t.rows.push_back(std::move(row));
    }
    write_csv(dir / "labels.csv", t);
  }
}

ScanArchive read_archive(const fs::path& dir) {
  std::istringstream in(read_text(dir / "manifest.txt"));
  ScanArchive a;
  std::string line, poses_file, labels_file;
  std::vector<std::string> frame_files, mask_files;
  long frame_count = -1;
  bool format_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "format") {
      if (value != "usspine-scan") throw std::runtime_error("manifest: unknown format '" + value + "'");
      format_seen = true;
    } else if (key == "version") {
      if (parse_int(value) != kArchiveVersion) throw std::runtime_error("manifest: unsupported version " + value);
    } else if (key == "frame_count") {
      frame_count = parse_int(value);
    } else if (key == "spacing_x") {
      a.spacing.x = parse_real(value);
    } else if (key == "spacing_y") {
      a.spacing.y = parse_real(value);
    } else if (key == "poses") {
      poses_file = value;
    } else if (key == "labels") {
      labels_file = value;
    } else if (key == "frames" || key == "masks") {
      auto& list = key == "frames" ? frame_files : mask_files;
      const long count = parse_int(value);
      for (long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("manifest: " + key + " list is truncated");
        list.push_back(line);
      }
    } else {
      throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
  }
  if (!format_seen) throw std::runtime_error("manifest: missing format line in " + dir.string());
  if (frame_count < 0 || static_cast<std::size_t>(frame_count) != frame_files.size()) {
    throw std::runtime_error("manifest: frame_count does not match the frame list");
  }
  if (!mask_files.empty() && mask_files.size() != frame_files.size()) {
    throw std::runtime_error("manifest: mask list length differs from frame list");
  }
  if (poses_file.empty()) throw std::runtime_error("manifest: no pose file");

  for (const auto& f : frame_files) a.frames.push_back(read_pgm(dir / f));
  for (const auto& f : mask_files) a.masks.push_back(read_pgm(dir / f));
  a.poses = read_poses_csv(dir / poses_file);
  if (a.poses.size() != a.frames.size()) throw std::runtime_error("archive: pose rows differ from frame count");
  if (!labels_file.empty()) {
    const CsvTable t = read_csv(dir / labels_file);
    if (t.rows.size() != a.frames.size()) throw std::runtime_error("archive: label rows differ from frame count");
    for (const auto& r : t.rows) {
      LandmarkSet lm;
      const bool on = r[t.column("on_vertebra")] == "1";
      read_landmark_fields(t, r, lm);
      lm.valid = on;
      a.labels.push_back(lm);
      a.on_vertebra.push_back(on);
    }
  }
  return a;
}

void save_weights(const fs::path& path, const ShnWeights& weights) {
  Writer w(path);
  w.bytes(kWeightMagic.data(), kWeightMagic.size());
  w.le(kWeightVersion);
  const ShnConfig& c = weights.config();
  for (int v : {c.num_stacks, c.channels, c.hourglass_depth, c.num_landmarks, c.input_size, c.heatmap_size,
                c.channel_norm ? 1 : 0}) {
    w.le(static_cast<std::int32_t>(v));
  }
  w.le(static_cast<std::uint32_t>(weights.params().size()));
  for (const auto& p : weights.params()) {
    w.le(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    const auto dims = p.value.shape().dims();
    w.le(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.le(static_cast<std::uint32_t>(d));
    for (Real v : p.value.data()) w.le(static_cast<float>(v));
  }
  w.finish(path);
}

ShnWeights load_weights(const fs::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kWeightMagic) throw std::runtime_error(path.string() + " is not a weight file");
  const auto version = r.le<std::uint32_t>();
  if (version != kWeightVersion) throw std::runtime_error("weight file version " + std::to_string(version) + " unsupported");
  ShnConfig c;
  c.num_stacks = r.le<std::int32_t>();
  c.channels = r.le<std::int32_t>();
  c.hourglass_depth = r.le<std::int32_t>();
  c.num_landmarks = r.le<std::int32_t>();
  c.input_size = r.le<std::int32_t>();
  c.heatmap_size = r.le<std::int32_t>();
  c.channel_norm = r.le<std::int32_t>() != 0;
  c.validate();

  const auto layout = shn_parameter_layout(c);
  const auto count = r.le<std::uint32_t>();
  if (count != layout.size()) throw std::runtime_error("weight file parameter count does not match its config");
  std::vector<Parameter> params;
  for (const auto& [name, shape] : layout) {
    const auto len = r.le<std::uint32_t>();
    if (len > 4096) throw std::runtime_error("weight file: implausible name length");
    std::string got(len, '\0');
    r.bytes(got.data(), len);
    if (got != name) throw std::runtime_error("weight file: expected parameter '" + name + "', found '" + got + "'");
    const auto rank = r.le<std::uint32_t>();
    const auto want = shape.dims();
    if (rank != want.size()) throw std::runtime_error("weight file: rank mismatch for " + name);
    for (auto d : want) {
      if (r.le<std::uint32_t>() != static_cast<std::uint32_t>(d)) throw std::runtime_error("weight file: shape mismatch for " + name);
    }
    Tensor value(shape);
    for (Real& v : value.data()) v = static_cast<Real>(r.le<float>());
    params.push_back({name, std::move(value), Tensor{}});
  }
  if (!r.at_end()) throw std::runtime_error("weight file: trailing bytes");
  return ShnWeights(c, std::move(params));
}

void save_volume(const fs::path& path, const VoxelGrid& g) {
  Writer w(path);
  w.bytes(kVolumeMagic.data(), kVolumeMagic.size());
  w.le(kVolumeVersion);
  for (int d : g.spec.dims) w.le(static_cast<std::int32_t>(d));
  for (double v : g.spec.origin) w.le(v);
  for (double v : g.spec.spacing) w.le(v);
  w.bytes(g.intensity.data(), g.intensity.size());
  w.bytes(g.sp_label.data(), g.sp_label.size());
  std::uint64_t filled = 0;
  for (const auto& c : g.contributor) filled += c.filled() ? 1 : 0;
  w.le(filled);
  for (std::size_t i = 0; i < g.contributor.size(); ++i) {
    const auto& c = g.contributor[i];
    if (!c.filled()) continue;
    w.le(static_cast<std::uint64_t>(i));
    w.le(c.distance2);
    w.le(c.frame);
    w.le(c.pixel);
  }
  w.finish(path);
}

VoxelGrid load_volume(const fs::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kVolumeMagic) throw std::runtime_error(path.string() + " is not a volume file");
  if (r.le<std::uint32_t>() != kVolumeVersion) throw std::runtime_error("volume file version unsupported");
  GridSpec s;
  for (auto& d : s.dims) {
    d = r.le<std::int32_t>();
    if (d <= 0) throw std::runtime_error("volume file: bad dimensions");
  }
  for (auto& v : s.origin) v = r.le<double>();
  for (auto& v : s.spacing) v = r.le<double>();
  VoxelGrid g(s);
  r.bytes(g.intensity.data(), g.intensity.size());
  r.bytes(g.sp_label.data(), g.sp_label.size());
  const auto filled = r.le<std::uint64_t>();
  for (std::uint64_t k = 0; k < filled; ++k) {
    const auto i = r.le<std::uint64_t>();
    if (i >= g.contributor.size()) throw std::runtime_error("volume file: contributor index out of range");
    Contributor c;
    c.distance2 = r.le<double>();
    c.frame = r.le<std::int32_t>();
    c.pixel = r.le<std::int32_t>();
    g.contributor[i] = c;
  }
  return g;
}

}  // namespace usspine
