#pragma once

// Domain types and the on-disk dataset layout.
//
//   manifest.json           label vocabulary, train/test split, sequence headers
//   <stream>.f32            little-endian float32, row-major [T, C]
//   <stream>.meta.json      {"rate_hz", "shape": [T, C], "channel_layout"}

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "xrfmamba/data/labels.hpp"
#include "xrfmamba/errors.hpp"

namespace xrf::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "stream files are read by mapping little-endian floats directly");

enum class ModalityKind {
  wifi_csi,
  imu_watch_left,
  imu_watch_right,
  imu_phone_left,
  imu_phone_right,
  imu_earbuds,
  imu_glasses,
};

inline constexpr std::array<ModalityKind, 6> kImuKinds = {
    ModalityKind::imu_watch_left, ModalityKind::imu_watch_right, ModalityKind::imu_phone_left,
    ModalityKind::imu_phone_right, ModalityKind::imu_earbuds, ModalityKind::imu_glasses};

inline constexpr std::array<ModalityKind, 7> kAllModalities = {
    ModalityKind::wifi_csi,        ModalityKind::imu_watch_left, ModalityKind::imu_watch_right,
    ModalityKind::imu_phone_left,  ModalityKind::imu_phone_right, ModalityKind::imu_earbuds,
    ModalityKind::imu_glasses};

inline std::string_view modality_name(ModalityKind m) {
  switch (m) {
    case ModalityKind::wifi_csi: return "wifi_csi";
    case ModalityKind::imu_watch_left: return "imu_watch_left";
    case ModalityKind::imu_watch_right: return "imu_watch_right";
    case ModalityKind::imu_phone_left: return "imu_phone_left";
    case ModalityKind::imu_phone_right: return "imu_phone_right";
    case ModalityKind::imu_earbuds: return "imu_earbuds";
    case ModalityKind::imu_glasses: return "imu_glasses";
  }
  return "";
}

inline std::optional<ModalityKind> parse_modality(std::string_view name) {
  for (auto m : kAllModalities) {
    if (modality_name(m) == name) return m;
  }
  return std::nullopt;
}

inline bool is_imu(ModalityKind m) { return m != ModalityKind::wifi_csi; }

/// Nominal sampling rate of each device.
inline double nominal_rate_hz(ModalityKind m) {
  switch (m) {
    case ModalityKind::wifi_csi: return 200.0;
    case ModalityKind::imu_earbuds: return 25.0;
    default: return 50.0;
  }
}

inline constexpr std::string_view kCsiAmplitudeLayout = "csi_amp:3x3x30";
inline constexpr std::string_view kCsiAmplitudePhaseLayout = "csi_amp_phase:3x3x30";
inline constexpr std::string_view kImuDefaultLayout = "acc3+gyr3";

/// Channel count implied by a layout descriptor, or nullopt if the descriptor
/// is unknown for the modality. CSI: "csi_amp:RxAxS" or "csi_amp_phase:RxAxS";
/// IMU: '+'-joined sensor groups such as "acc3+gyr3".
inline std::optional<std::size_t> layout_channels(ModalityKind m, std::string_view layout) {
  auto parse_uint = [](std::string_view s) -> std::optional<std::size_t> {
    if (s.empty()) return std::nullopt;
    std::size_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    return v;
  };
  if (m == ModalityKind::wifi_csi) {
    const auto colon = layout.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    const auto kind = layout.substr(0, colon);
    std::size_t factor = 0;
    if (kind == "csi_amp") factor = 1;
    else if (kind == "csi_amp_phase") factor = 2;
    else return std::nullopt;
    auto dims = layout.substr(colon + 1);
    std::size_t product = 1;
    int count = 0;
    while (!dims.empty()) {
      const auto x = dims.find('x');
      const auto part = dims.substr(0, x);
      auto v = parse_uint(part);
      if (!v || *v == 0) return std::nullopt;
      product *= *v;
      ++count;
      if (x == std::string_view::npos) break;
      dims = dims.substr(x + 1);
    }
    if (count != 3) return std::nullopt;
    return factor * product;
  }
  std::size_t total = 0;
  while (!layout.empty()) {
    const auto plus = layout.find('+');
    const auto group = layout.substr(0, plus);
    if (group.size() < 4) return std::nullopt;
    const auto name = group.substr(0, 3);
    if (name != "acc" && name != "gyr" && name != "mag") return std::nullopt;
    auto v = parse_uint(group.substr(3));
    if (!v || *v == 0) return std::nullopt;
    total += *v;
    if (plus == std::string_view::npos) break;
    layout = layout.substr(plus + 1);
  }
  return total == 0 ? std::nullopt : std::optional<std::size_t>(total);
}

/// Read-only float storage: either owned or a private file mapping.
class SampleStorage {
 public:
  explicit SampleStorage(std::vector<float> owned) : owned_(std::move(owned)) {
    data_ = owned_.data();
    size_ = owned_.size();
  }

  static std::shared_ptr<SampleStorage> map_file(const fs::path& path, std::size_t count) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw IoError("cannot open stream file " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw IoError("cannot stat " + path.string());
    }
    if (static_cast<std::size_t>(st.st_size) != count * sizeof(float)) {
      ::close(fd);
      throw SchemaError(path.string() + ": file holds " + std::to_string(st.st_size) +
                        " bytes, sidecar shape implies " + std::to_string(count * sizeof(float)));
    }
    auto storage = std::shared_ptr<SampleStorage>(new SampleStorage());
    if (count > 0) {
      void* p = ::mmap(nullptr, count * sizeof(float), PROT_READ, MAP_PRIVATE, fd, 0);
      if (p == MAP_FAILED) {
        ::close(fd);
        throw IoError("mmap failed for " + path.string());
      }
      storage->mapping_ = p;
      storage->data_ = static_cast<const float*>(p);
    }
    storage->size_ = count;
    ::close(fd);
    return storage;
  }

  ~SampleStorage() {
    if (mapping_) ::munmap(mapping_, size_ * sizeof(float));
  }
  SampleStorage(const SampleStorage&) = delete;
  SampleStorage& operator=(const SampleStorage&) = delete;

  std::span<const float> span() const { return {data_, size_}; }

 private:
  SampleStorage() = default;
  std::vector<float> owned_;
  void* mapping_ = nullptr;
  const float* data_ = nullptr;
  std::size_t size_ = 0;
};

/// One device's time series, time-major [T, C].
class SensorStream {
 public:
  SensorStream() = default;
  SensorStream(ModalityKind modality, double rate_hz, std::size_t channels,
               std::string channel_layout, std::shared_ptr<const SampleStorage> storage)
      : modality_(modality),
        rate_hz_(rate_hz),
        channels_(channels),
        layout_(std::move(channel_layout)),
        storage_(std::move(storage)) {
    if (!(rate_hz_ > 0.0)) throw SchemaError("SensorStream: rate_hz must be positive");
    if (channels_ == 0 || storage_->span().size() % channels_ != 0) {
      throw ShapeError("SensorStream: sample count is not a multiple of channels");
    }
  }

  static SensorStream from_values(ModalityKind modality, double rate_hz, std::size_t channels,
                                  std::string layout, std::vector<float> values) {
    return SensorStream(modality, rate_hz, channels, std::move(layout),
                        std::make_shared<SampleStorage>(std::move(values)));
  }

  ModalityKind modality() const { return modality_; }
  double rate_hz() const { return rate_hz_; }
  std::size_t channels() const { return channels_; }
  std::size_t length() const { return storage_ ? storage_->span().size() / channels_ : 0; }
  const std::string& channel_layout() const { return layout_; }
  std::span<const float> samples() const { return storage_->span(); }
  std::span<const float> row(std::size_t t) const {
    return samples().subspan(t * channels_, channels_);
  }

 private:
  ModalityKind modality_ = ModalityKind::wifi_csi;
  double rate_hz_ = 1.0;
  std::size_t channels_ = 1;
  std::string layout_;
  std::shared_ptr<const SampleStorage> storage_;
};

struct AnnotationTuple {
  int label = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  double duration() const { return end_s - start_s; }
  bool operator==(const AnnotationTuple&) const = default;
};

struct Segment {
  int label = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;

  double duration() const { return end_s - start_s; }
  bool operator==(const Segment&) const = default;
};

struct StreamRef {
  fs::path path;  // relative to the manifest directory
  double rate_hz = 0.0;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::string channel_layout;
};

/// A sequence as listed in the manifest: metadata plus stream locations.
struct SequenceHeader {
  std::string id;
  Scene scene = Scene::dining;
  std::string subject;
  double duration_s = 0.0;
  std::vector<AnnotationTuple> annotations;
  std::map<ModalityKind, StreamRef> streams;
};

/// A sequence with its sensor data attached.
struct SequenceRecord {
  std::string id;
  Scene scene = Scene::dining;
  std::string subject;
  double duration_s = 0.0;
  std::vector<AnnotationTuple> annotations;
  std::map<ModalityKind, SensorStream> streams;
};

struct DatasetManifest {
  fs::path root;  // directory containing manifest.json
  std::vector<std::string> label_names;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<SequenceHeader> sequences;

  const SequenceHeader& find(const std::string& id) const {
    for (const auto& s : sequences) {
      if (s.id == id) return s;
    }
    throw SchemaError("manifest: unknown sequence id '" + id + "'");
  }
};

// ------------------------------------------------------------------ validation

/// Checks label range, ordering, bounds and non-overlap. `where` prefixes the
/// error message (e.g. "sequences[3]").
inline void validate_annotations(const std::vector<AnnotationTuple>& anns, double duration_s,
                                 const std::string& where) {
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    const std::string at = where + ".annotations[" + std::to_string(i) + "]";
    if (!valid_label(a.label)) {
      throw SchemaError(at + ": unknown label " + std::to_string(a.label));
    }
    if (!(a.end_s > a.start_s)) {
      throw SchemaError(at + ": end_s (" + std::to_string(a.end_s) + ") <= start_s (" +
                        std::to_string(a.start_s) + ")");
    }
    if (a.start_s < 0.0 || a.end_s > duration_s + 1e-9) {
      throw SchemaError(at + ": outside [0, duration_s]");
    }
    if (i > 0) {
      const auto& prev = anns[i - 1];
      if (a.start_s < prev.start_s) throw SchemaError(at + ": annotations not sorted by start_s");
      if (a.start_s < prev.end_s - 1e-9) {
        throw SchemaError(at + ": overlaps annotations[" + std::to_string(i - 1) + "]");
      }
    }
  }
}

inline void validate_stream_length(const StreamRef& s, double duration_s, const std::string& at) {
  const double expected = std::round(s.rate_hz * duration_s);
  if (std::abs(static_cast<double>(s.length) - expected) > 1.0) {
    throw SchemaError(at + ": " + std::to_string(s.length) + " samples, expected " +
                      std::to_string(static_cast<long long>(expected)) + " ±1 at " +
                      std::to_string(s.rate_hz) + " Hz");
  }
}

// ------------------------------------------------------------------ stream IO

inline json stream_meta_json(const StreamRef& s) {
  return json{{"rate_hz", s.rate_hz},
              {"shape", json::array({s.length, s.channels})},
              {"channel_layout", s.channel_layout}};
}

inline fs::path meta_path_for(const fs::path& f32) {
  fs::path p = f32;
  p.replace_extension(".meta.json");
  return p;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline json parse_json_file(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  }
}

/// Writes `<path>` and its sidecar. `values` is row-major [T, C].
inline void write_stream(const fs::path& path, const StreamRef& meta, std::span<const float> values) {
  if (values.size() != meta.length * meta.channels) throw ShapeError("write_stream: size mismatch");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
  write_text(meta_path_for(path), stream_meta_json(meta).dump(2) + "\n");
}

inline StreamRef read_stream_meta(ModalityKind m, const fs::path& f32, const std::string& at) {
  const auto meta_file = meta_path_for(f32);
  if (!fs::exists(f32)) throw IoError(at + ": missing stream file " + f32.string());
  if (!fs::exists(meta_file)) throw IoError(at + ": missing sidecar " + meta_file.string());
  const auto j = parse_json_file(meta_file);
  StreamRef s;
  try {
    s.rate_hz = j.at("rate_hz").get<double>();
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 2) throw SchemaError(at + ".shape: expected [T, C]");
    s.length = shape[0].get<std::size_t>();
    s.channels = shape[1].get<std::size_t>();
    s.channel_layout = j.at("channel_layout").get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(at + " sidecar: " + e.what());
  }
  if (!(s.rate_hz > 0.0)) throw SchemaError(at + ".rate_hz: must be positive");
  const auto expected = layout_channels(m, s.channel_layout);
  if (!expected) {
    throw SchemaError(at + ".channel_layout: unknown layout '" + s.channel_layout + "' for " +
                      std::string(modality_name(m)));
  }
  if (*expected != s.channels) {
    throw SchemaError(at + ".shape: " + std::to_string(s.channels) + " channels, layout '" +
                      s.channel_layout + "' implies " + std::to_string(*expected));
  }
  const auto bytes = fs::file_size(f32);
  if (bytes != s.length * s.channels * sizeof(float)) {
    throw SchemaError(at + ": " + f32.string() + " size does not match shape");
  }
  return s;
}

// ------------------------------------------------------------------ manifest

inline json annotations_json(const std::vector<AnnotationTuple>& anns) {
  json arr = json::array();
  for (const auto& a : anns) arr.push_back({{"label", a.label}, {"start_s", a.start_s}, {"end_s", a.end_s}});
  return arr;
}

inline json manifest_json(const DatasetManifest& m) {
  json seqs = json::array();
  for (const auto& s : m.sequences) {
    json streams = json::object();
    for (const auto& [kind, ref] : s.streams) streams[std::string(modality_name(kind))] = ref.path.generic_string();
    seqs.push_back({{"id", s.id},
                    {"scene", std::string(scene_name(s.scene))},
                    {"subject", s.subject},
                    {"duration_s", s.duration_s},
                    {"annotations", annotations_json(s.annotations)},
                    {"streams", streams}});
  }
  return json{{"label_names", m.label_names},
              {"split", {{"train", m.train_ids}, {"test", m.test_ids}}},
              {"sequences", seqs}};
}

/// Normalized serialization: sorted keys, two-space indent, trailing newline.
inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
  write_text(path, manifest_json(m).dump(2) + "\n");
}

namespace detail {

template <typename V>
V field(const json& obj, const char* key, const std::string& at) {
  if (!obj.is_object() || !obj.contains(key)) throw SchemaError(at + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw SchemaError(at + "." + key + ": wrong type");
  }
}

}  // namespace detail

/// Parses and eagerly validates a manifest, including every stream sidecar.
inline DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("manifest not found: " + path.string());
  const json j = parse_json_file(path);
  DatasetManifest m;
  m.root = path.parent_path();
  m.label_names = detail::field<std::vector<std::string>>(j, "label_names", "manifest");
  if (m.label_names.size() != kNumClasses) {
    throw SchemaError("manifest.label_names: expected " + std::to_string(kNumClasses) +
                      " names, got " + std::to_string(m.label_names.size()));
  }
  const json split = detail::field<json>(j, "split", "manifest");
  m.train_ids = detail::field<std::vector<std::string>>(split, "train", "manifest.split");
  m.test_ids = detail::field<std::vector<std::string>>(split, "test", "manifest.split");
  const json seqs = detail::field<json>(j, "sequences", "manifest");
  if (!seqs.is_array()) throw SchemaError("manifest.sequences: expected array");

  std::set<std::string> ids;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::string at = "sequences[" + std::to_string(i) + "]";
    const json& s = seqs[i];
    SequenceHeader h;
    h.id = detail::field<std::string>(s, "id", at);
    if (!ids.insert(h.id).second) throw SchemaError(at + ".id: duplicate id '" + h.id + "'");
    const auto scene = parse_scene(detail::field<std::string>(s, "scene", at));
    if (!scene) throw SchemaError(at + ".scene: unknown scene");
    h.scene = *scene;
    h.subject = detail::field<std::string>(s, "subject", at);
    h.duration_s = detail::field<double>(s, "duration_s", at);
    if (!(h.duration_s > 0.0)) throw SchemaError(at + ".duration_s: must be positive");
    const json anns = detail::field<json>(s, "annotations", at);
    if (!anns.is_array()) throw SchemaError(at + ".annotations: expected array");
    for (std::size_t k = 0; k < anns.size(); ++k) {
      const std::string aat = at + ".annotations[" + std::to_string(k) + "]";
      h.annotations.push_back({detail::field<int>(anns[k], "label", aat),
                               detail::field<double>(anns[k], "start_s", aat),
                               detail::field<double>(anns[k], "end_s", aat)});
    }
    validate_annotations(h.annotations, h.duration_s, at);
    const json streams = detail::field<json>(s, "streams", at);
    if (!streams.is_object()) throw SchemaError(at + ".streams: expected object");
    for (const auto& [name, rel] : streams.items()) {
      const std::string sat = at + ".streams." + name;
      const auto kind = parse_modality(name);
      if (!kind) throw SchemaError(sat + ": unknown modality");
      if (!rel.is_string()) throw SchemaError(sat + ": expected path string");
      const fs::path relpath = rel.get<std::string>();
      auto ref = read_stream_meta(*kind, m.root / relpath, sat);
      ref.path = relpath;
      validate_stream_length(ref, h.duration_s, sat);
      h.streams[*kind] = std::move(ref);
    }
    m.sequences.push_back(std::move(h));
  }

  std::set<std::string> train(m.train_ids.begin(), m.train_ids.end());
  if (train.size() != m.train_ids.size()) throw SchemaError("split.train: duplicate ids");
  std::set<std::string> test(m.test_ids.begin(), m.test_ids.end());
  if (test.size() != m.test_ids.size()) throw SchemaError("split.test: duplicate ids");
  for (const auto& id : m.test_ids) {
    if (train.count(id)) throw SchemaError("split: sequence '" + id + "' is in both train and test");
  }
  for (const auto* list : {&m.train_ids, &m.test_ids}) {
    for (const auto& id : *list) {
      if (!ids.count(id)) throw SchemaError("split: unknown sequence id '" + id + "'");
    }
  }
  return m;
}

/// Maps the header's stream files.
inline SequenceRecord open_sequence(const DatasetManifest& m, const SequenceHeader& h) {
  SequenceRecord r{h.id, h.scene, h.subject, h.duration_s, h.annotations, {}};
  for (const auto& [kind, ref] : h.streams) {
    auto storage = SampleStorage::map_file(m.root / ref.path, ref.length * ref.channels);
    r.streams.emplace(kind, SensorStream(kind, ref.rate_hz, ref.channels, ref.channel_layout,
                                         std::move(storage)));
  }
  return r;
}

inline SequenceRecord open_sequence(const DatasetManifest& m, const std::string& id) {
  return open_sequence(m, m.find(id));
}

}  // namespace xrf::data
