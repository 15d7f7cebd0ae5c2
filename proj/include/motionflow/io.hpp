#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "motionflow/geometry.hpp"
#include "motionflow/morpher.hpp"

namespace motionflow {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line,
             const std::string& what)
      : std::runtime_error(path + ": line " + std::to_string(line) + ": " +
                           what),
        line_(line) {}
  ParseError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class UnsupportedFormat : public std::runtime_error {
 public:
  explicit UnsupportedFormat(const std::string& what)
      : std::runtime_error(what) {}
};

class VersionMismatch : public std::runtime_error {
 public:
  explicit VersionMismatch(const std::string& what)
      : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

enum class CloudFormat { xyz, obj, ply };

inline CloudFormat cloud_format_from_path(const std::string& path) {
  const std::string ext = std::filesystem::path(path).extension().string();
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::xyz;
  if (ext == ".obj") return CloudFormat::obj;
  if (ext == ".ply") return CloudFormat::ply;
  throw UnsupportedFormat("cannot infer point cloud format from '" + path +
                          "' (expected .xyz, .obj or .ply)");
}

namespace detail {

inline bool parse_reals(const std::string& text, real_t* out, int count) {
  std::istringstream ss(text);
  for (int i = 0; i < count; ++i) {
    double v;
    if (!(ss >> v)) return false;
    out[i] = static_cast<real_t>(v);
  }
  std::string rest;
  if (ss >> rest) return false;
  return true;
}

inline bool blank(const std::string& line) {
  for (char c : line)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

inline PointCloud load_xyz(std::istream& in, const std::string& path) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    real_t v[3];
    if (!parse_reals(line, v, 3))
      throw ParseError(path, line_no, "expected 'x y z', got '" + line + "'");
    cloud.points.push_back({v[0], v[1], v[2]});
  }
  return cloud;
}

inline PointCloud load_obj(std::istream& in, const std::string& path) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag != "v") continue;  // faces and the rest: ignored
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw ParseError(path, line_no, "malformed vertex line '" + line + "'");
    cloud.points.push_back({static_cast<real_t>(x), static_cast<real_t>(y),
                            static_cast<real_t>(z)});
  }
  return cloud;
}

inline PointCloud load_ply(std::istream& in, const std::string& path) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    throw ParseError(path, 1, "not a PLY file (missing 'ply' magic)");
  ++line_no;

  std::size_t vertex_count = 0;
  bool in_vertex_element = false, seen_format = false;
  int x_col = -1, y_col = -1, z_col = -1, n_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "comment") continue;
    if (tag == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii")
        throw UnsupportedFormat(path + ": only ascii PLY is supported, got '" +
                                fmt + "'");
      seen_format = true;
    } else if (tag == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex_element = name == "vertex";
      if (in_vertex_element) vertex_count = count;
    } else if (tag == "property" && in_vertex_element) {
      std::string type, name;
      ss >> type >> name;
      if (type == "list")
        throw ParseError(path, line_no, "list property on vertex element");
      if (name == "x") x_col = n_cols;
      if (name == "y") y_col = n_cols;
      if (name == "z") z_col = n_cols;
      ++n_cols;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!seen_format) throw ParseError(path, line_no, "missing format line");
  if (x_col < 0 || y_col < 0 || z_col < 0)
    throw ParseError(path, line_no, "vertex element lacks x/y/z properties");

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line))
      throw ParseError(path, line_no,
                       "expected " + std::to_string(vertex_count) +
                           " vertices, file ended after " + std::to_string(i));
    ++line_no;
    std::istringstream ss(line);
    Point3 p;
    for (int col = 0; col < n_cols; ++col) {
      double v;
      if (!(ss >> v))
        throw ParseError(path, line_no, "malformed vertex line '" + line + "'");
      if (col == x_col) p.x = static_cast<real_t>(v);
      if (col == y_col) p.y = static_cast<real_t>(v);
      if (col == z_col) p.z = static_cast<real_t>(v);
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

// 17 significant digits: enough to reproduce any double exactly.
inline std::string format_point(const Point3& p) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g",
                static_cast<double>(p.x), static_cast<double>(p.y),
                static_cast<double>(p.z));
  return buf;
}

}  // namespace detail

inline PointCloud load_cloud(const std::string& path, CloudFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  switch (format) {
    case CloudFormat::xyz: return detail::load_xyz(in, path);
    case CloudFormat::obj: return detail::load_obj(in, path);
    case CloudFormat::ply: return detail::load_ply(in, path);
  }
  throw std::invalid_argument("load_cloud: bad format");
}

inline PointCloud load_cloud(const std::string& path) {
  return load_cloud(path, cloud_format_from_path(path));
}

inline void save_cloud(const PointCloud& cloud, const std::string& path,
                       CloudFormat format) {
  if (cloud.empty()) throw std::invalid_argument("save_cloud: empty cloud");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  switch (format) {
    case CloudFormat::xyz:
      for (const Point3& p : cloud.points)
        out << detail::format_point(p) << "\n";
      break;
    case CloudFormat::obj:
      for (const Point3& p : cloud.points)
        out << "v " << detail::format_point(p) << "\n";
      break;
    case CloudFormat::ply:
      out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
          << "\nproperty double x\nproperty double y\nproperty double z\n"
             "end_header\n";
      for (const Point3& p : cloud.points)
        out << detail::format_point(p) << "\n";
      break;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void save_cloud(const PointCloud& cloud, const std::string& path) {
  save_cloud(cloud, path, cloud_format_from_path(path));
}

// ---------------------------------------------------------------------------
// Checkpoints

constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t steps = 0;
  std::uint64_t seed = 0;
  double loss = 0;
};

struct LatentRecord {
  std::string pair_id;
  Vector z;
};

namespace detail {

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    arr.push_back(static_cast<double>(v(i)));
  return arr;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      arr.push_back(static_cast<double>(m(r, c)));
  return arr;
}

}  // namespace detail

inline void save_checkpoint(const MorpherNet& net,
                            const std::vector<LatentRecord>& latents,
                            const std::string& path,
                            const CheckpointMeta& meta = {}) {
  if (net.layers.empty())
    throw std::invalid_argument("save_checkpoint: net has no layers");
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["latent_dim"] = net.latent_dim;
  nlohmann::json hidden = nlohmann::json::array();
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k)
    hidden.push_back(net.layers[k].out_dim());
  doc["hidden_dims"] = hidden;
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& l : net.layers) {
    nlohmann::json layer;
    layer["weights"] = detail::matrix_to_json(l.weights);  // row-major out x in
    layer["bias"] = detail::vector_to_json(l.bias);
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  doc["metadata"] = {{"steps", meta.steps},
                     {"seed", meta.seed},
                     {"loss", meta.loss}};
  nlohmann::json lat = nlohmann::json::array();
  for (const LatentRecord& rec : latents) {
    if (rec.z.size() != net.latent_dim)
      throw std::invalid_argument("save_checkpoint: latent '" + rec.pair_id +
                                  "' has wrong length");
    lat.push_back({{"pair_id", rec.pair_id},
                   {"z", detail::vector_to_json(rec.z)}});
  }
  doc["latents"] = std::move(lat);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << doc.dump(1) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct CheckpointData {
  MorpherNet net;
  std::vector<LatentRecord> latents;
  CheckpointMeta meta;
};

// Refuses anything whose layer dimensions do not chain as
// (3 + latent_dim) -> hidden... -> 3.
inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid checkpoint JSON: ") + e.what());
  }

  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionMismatch(path + ": checkpoint format_version " +
                            std::to_string(version) + " is not supported (" +
                            "expected " + std::to_string(kCheckpointVersion) +
                            ")");
    CheckpointData data;
    data.net.latent_dim = doc.at("latent_dim").get<int>();
    if (data.net.latent_dim < 1)
      throw ParseError(path, "latent_dim must be >= 1");
    const std::vector<int> hidden =
        doc.at("hidden_dims").get<std::vector<int>>();

    std::vector<int> dims;
    dims.push_back(3 + data.net.latent_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(3);

    const auto& layers = doc.at("layers");
    if (layers.size() + 1 != dims.size())
      throw ParseError(path, "layer count does not match hidden_dims");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const int in_dim = dims[k], out_dim = dims[k + 1];
      const auto& weights = layers[k].at("weights");
      const auto& bias = layers[k].at("bias");
      if (static_cast<int>(weights.size()) != in_dim * out_dim)
        throw ParseError(path, "layer " + std::to_string(k) + " expects " +
                                   std::to_string(in_dim * out_dim) +
                                   " weights, found " +
                                   std::to_string(weights.size()));
      if (static_cast<int>(bias.size()) != out_dim)
        throw ParseError(path, "layer " + std::to_string(k) + " expects " +
                                   std::to_string(out_dim) + " biases, found " +
                                   std::to_string(bias.size()));
      LayerParams layer;
      layer.weights.resize(out_dim, in_dim);
      for (int i = 0; i < in_dim * out_dim; ++i)
        layer.weights.data()[i] = static_cast<real_t>(weights[i].get<double>());
      layer.bias.resize(out_dim);
      for (int i = 0; i < out_dim; ++i)
        layer.bias(i) = static_cast<real_t>(bias[i].get<double>());
      data.net.layers.push_back(std::move(layer));
    }

    for (const auto& rec : doc.at("latents")) {
      LatentRecord out;
      out.pair_id = rec.at("pair_id").get<std::string>();
      const auto& z = rec.at("z");
      if (static_cast<int>(z.size()) != data.net.latent_dim)
        throw ParseError(path, "latent '" + out.pair_id +
                                   "' length does not match latent_dim");
      out.z.resize(data.net.latent_dim);
      for (int i = 0; i < data.net.latent_dim; ++i)
        out.z(i) = static_cast<real_t>(z[i].get<double>());
      data.latents.push_back(std::move(out));
    }

    const auto& meta = doc.at("metadata");
    data.meta.steps = meta.value("steps", std::uint64_t{0});
    data.meta.seed = meta.value("seed", std::uint64_t{0});
    data.meta.loss = meta.value("loss", 0.0);
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Episode and dataset persistence: three xyz frames plus a JSON manifest per
// episode, and a dataset index listing episode ids.

namespace detail {

inline nlohmann::json flow_to_json(const FlowField& flow) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Vec3& v : flow.vectors)
    arr.push_back({static_cast<double>(v.x), static_cast<double>(v.y),
                   static_cast<double>(v.z)});
  return arr;
}

inline FlowField flow_from_json(const nlohmann::json& arr, int source_frame) {
  FlowField flow;
  flow.source_frame_id = source_frame;
  flow.vectors.reserve(arr.size());
  for (const auto& v : arr)
    flow.vectors.push_back({static_cast<real_t>(v.at(0).get<double>()),
                            static_cast<real_t>(v.at(1).get<double>()),
                            static_cast<real_t>(v.at(2).get<double>())});
  return flow;
}

}  // namespace detail

inline void save_episode(const Episode& ep, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["episode_id"] = ep.episode_id;
  nlohmann::json frames = nlohmann::json::array();
  for (int k = 0; k < 3; ++k) {
    const std::string name =
        ep.episode_id + ".frame" + std::to_string(k) + ".xyz";
    save_cloud(ep.frames[k], (std::filesystem::path(dir) / name).string(),
               CloudFormat::xyz);
    frames.push_back(name);
  }
  manifest["frames"] = frames;
  if (ep.gt_flows) {
    manifest["gt_flows"] = {detail::flow_to_json((*ep.gt_flows)[0]),
                            detail::flow_to_json((*ep.gt_flows)[1])};
  } else {
    manifest["gt_flows"] = nullptr;
  }
  const std::string path =
      (std::filesystem::path(dir) / (ep.episode_id + ".manifest.json"))
          .string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << manifest.dump(1) << "\n";
}

inline Episode load_episode(const std::string& dir, const std::string& id) {
  const std::string path =
      (std::filesystem::path(dir) / (id + ".manifest.json")).string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid manifest JSON: ") + e.what());
  }
  try {
    Episode ep;
    ep.episode_id = manifest.at("episode_id").get<std::string>();
    const auto& frames = manifest.at("frames");
    if (frames.size() != 3)
      throw ParseError(path, "episode must have exactly 3 frames");
    for (int k = 0; k < 3; ++k) {
      const std::string frame_path =
          (std::filesystem::path(dir) / frames[k].get<std::string>()).string();
      ep.frames[k] = load_cloud(frame_path, CloudFormat::xyz);
      ep.frames[k].frame_id = k;
    }
    if (!manifest.at("gt_flows").is_null()) {
      const auto& flows = manifest.at("gt_flows");
      std::array<FlowField, 2> gt{detail::flow_from_json(flows.at(0), 0),
                                  detail::flow_from_json(flows.at(1), 1)};
      for (int k = 0; k < 2; ++k)
        if (gt[k].size() != ep.frames[k].size())
          throw ParseError(path, "gt flow " + std::to_string(k) +
                                     " length does not match its frame");
      ep.gt_flows = std::move(gt);
    }
    return ep;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid manifest: ") + e.what());
  }
}

inline void save_dataset(const std::vector<Episode>& episodes,
                         const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  nlohmann::json ids = nlohmann::json::array();
  for (const Episode& ep : episodes) {
    save_episode(ep, dir);
    ids.push_back(ep.episode_id);
  }
  index["episodes"] = std::move(ids);
  const std::string path =
      (std::filesystem::path(dir) / "dataset.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << index.dump(1) << "\n";
}

inline std::vector<Episode> load_dataset(const std::string& dir) {
  const std::string path =
      (std::filesystem::path(dir) / "dataset.json").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json index;
  try {
    in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("invalid dataset JSON: ") + e.what());
  }
  std::vector<Episode> episodes;
  for (const auto& id : index.at("episodes"))
    episodes.push_back(load_episode(dir, id.get<std::string>()));
  return episodes;
}

// ---------------------------------------------------------------------------
// CSV emitters. Full 17-digit precision so reruns are byte-comparable.

namespace detail {

inline std::string format_real(real_t v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(v));
  return buf;
}

}  // namespace detail

inline void write_loss_csv(const std::vector<real_t>& history,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "step,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out << i << "," << detail::format_real(history[i]) << "\n";
}

inline void write_correspondence_csv(const std::vector<Point3>& positions,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "src_index,x,y,z\n";
  for (std::size_t i = 0; i < positions.size(); ++i)
    out << i << "," << detail::format_real(positions[i].x) << ","
        << detail::format_real(positions[i].y) << ","
        << detail::format_real(positions[i].z) << "\n";
}

}  // namespace motionflow
