#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "motionflow/geometry.hpp"
#include "motionflow/inference.hpp"
#include "motionflow/io.hpp"
#include "motionflow/metrics.hpp"
#include "motionflow/morpher.hpp"
#include "motionflow/synth.hpp"
#include "motionflow/training.hpp"

namespace motionflow {

// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kUsageError = 1, kRuntimeError = 2 };

// Everything a run needs, mergeable from a JSON config file with
// command-line flags taking precedence. Unknown or absent keys keep their
// defaults, so partial config files are fine.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir;

  // training
  std::string data_dir;
  std::size_t steps = 6000;
  real_t lr_theta = 1e-4;
  real_t lr_z = 1e-3;
  int latent_dim = 256;
  std::vector<int> hidden_dims = {512, 256, 128, 64};
  std::size_t n_points = 2048;
  real_t lambda_z = 0;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only

  // inference
  std::string checkpoint_path;
  std::string frame0_path;
  std::string frame1_path;
  std::string out_format = "xyz";
  std::size_t max_iters = 800;
  real_t rel_tol = 1e-6;
  std::size_t patience = 20;

  // eval
  std::string pred_path;
  std::string gt_path;

  // corrupt
  std::string in_path;
  real_t noise_sigma = 0;
  std::size_t holes = 0;
  real_t hole_radius = 0.1;
  real_t partial_fraction = 0;

  // synth
  std::string families = "rigid_rotation";
  std::size_t episodes_per_family = 10;
  real_t step_min = 0.15;
  real_t step_max = 0.35;
  real_t bend_amplitude = 0.4;
  bool resample_frames = false;

  // gradcheck
  real_t fd_step = 1e-6;
  real_t fd_tol = 1e-5;

  nlohmann::json to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"out_dir", out_dir},
                          {"data_dir", data_dir},
                          {"steps", steps},
                          {"lr_theta", lr_theta},
                          {"lr_z", lr_z},
                          {"latent_dim", latent_dim},
                          {"hidden_dims", hidden_dims},
                          {"n_points", n_points},
                          {"lambda_z", lambda_z},
                          {"checkpoint_every", checkpoint_every},
                          {"checkpoint_path", checkpoint_path},
                          {"frame0_path", frame0_path},
                          {"frame1_path", frame1_path},
                          {"out_format", out_format},
                          {"max_iters", max_iters},
                          {"rel_tol", rel_tol},
                          {"patience", patience},
                          {"pred_path", pred_path},
                          {"gt_path", gt_path},
                          {"in_path", in_path},
                          {"noise_sigma", noise_sigma},
                          {"holes", holes},
                          {"hole_radius", hole_radius},
                          {"partial_fraction", partial_fraction},
                          {"families", families},
                          {"episodes_per_family", episodes_per_family},
                          {"step_min", step_min},
                          {"step_max", step_max},
                          {"bend_amplitude", bend_amplitude},
                          {"resample_frames", resample_frames},
                          {"fd_step", fd_step},
                          {"fd_tol", fd_tol}};
  }

  void apply_json(const nlohmann::json& j) {
    seed = j.value("seed", seed);
    out_dir = j.value("out_dir", out_dir);
    data_dir = j.value("data_dir", data_dir);
    steps = j.value("steps", steps);
    lr_theta = j.value("lr_theta", lr_theta);
    lr_z = j.value("lr_z", lr_z);
    latent_dim = j.value("latent_dim", latent_dim);
    hidden_dims = j.value("hidden_dims", hidden_dims);
    n_points = j.value("n_points", n_points);
    lambda_z = j.value("lambda_z", lambda_z);
    checkpoint_every = j.value("checkpoint_every", checkpoint_every);
    checkpoint_path = j.value("checkpoint_path", checkpoint_path);
    frame0_path = j.value("frame0_path", frame0_path);
    frame1_path = j.value("frame1_path", frame1_path);
    out_format = j.value("out_format", out_format);
    max_iters = j.value("max_iters", max_iters);
    rel_tol = j.value("rel_tol", rel_tol);
    patience = j.value("patience", patience);
    pred_path = j.value("pred_path", pred_path);
    gt_path = j.value("gt_path", gt_path);
    in_path = j.value("in_path", in_path);
    noise_sigma = j.value("noise_sigma", noise_sigma);
    holes = j.value("holes", holes);
    hole_radius = j.value("hole_radius", hole_radius);
    partial_fraction = j.value("partial_fraction", partial_fraction);
    families = j.value("families", families);
    episodes_per_family = j.value("episodes_per_family", episodes_per_family);
    step_min = j.value("step_min", step_min);
    step_max = j.value("step_max", step_max);
    bend_amplitude = j.value("bend_amplitude", bend_amplitude);
    resample_frames = j.value("resample_frames", resample_frames);
    fd_step = j.value("fd_step", fd_step);
    fd_tol = j.value("fd_tol", fd_tol);
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, std::string("invalid config JSON: ") + e.what());
    }
    apply_json(j);
  }
};

namespace detail {

inline void echo_config(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const std::string path =
      (std::filesystem::path(config.out_dir) / "config.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << config.to_json().dump(1) << "\n";
}

inline std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void write_cma_csv(const CmaCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "delta,accuracy\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    out << format_real(curve.thresholds[i]) << ","
        << format_real(curve.accuracies[i]) << "\n";
}

inline bool require(bool ok, const std::string& message) {
  if (!ok) std::cerr << "error: " << message << "\n";
  return ok;
}

inline std::vector<LatentRecord> latent_records(const LatentStore& store) {
  std::vector<LatentRecord> records;
  records.reserve(store.entries.size());
  for (const auto& [id, entry] : store.entries)
    records.push_back({id, entry.z});
  return records;
}

}  // namespace detail

// Generates a synthetic dataset of 3-frame episodes to out_dir.
inline int cmd_synth(const RunConfig& config) {
  if (!detail::require(!config.out_dir.empty(), "--out is required")) return kUsageError;
  std::vector<MotionFamily> families;
  for (const std::string& name : detail::split_csv(config.families)) {
    MotionFamily family;
    family.kind = motion_kind_from_name(name);  // throws on unknown names
    family.random_axis = true;
    family.step_min = config.step_min;
    family.step_max = config.step_max;
    family.bend_amplitude = config.bend_amplitude;
    family.resample_frames = config.resample_frames;
    family.base_shape_seed = config.seed;
    families.push_back(family);
  }
  if (!detail::require(!families.empty(), "--families must name at least one family"))
    return kUsageError;

  const std::vector<Episode> episodes = gen_dataset(
      families, config.episodes_per_family, config.n_points, config.seed);
  save_dataset(episodes, config.out_dir);
  detail::echo_config(config);
  std::cout << "wrote " << episodes.size() << " episodes to " << config.out_dir
            << "\n";
  return kOk;
}

// Trains on every episode under data_dir; writes checkpoint.json + loss.csv.
inline int cmd_train(const RunConfig& config) {
  if (!detail::require(!config.out_dir.empty(), "--out is required")) return kUsageError;
  if (!detail::require(!config.data_dir.empty(), "--data is required")) return kUsageError;
  if (!detail::require(
          std::filesystem::exists(std::filesystem::path(config.data_dir) /
                                  "dataset.json"),
          "no dataset.json under '" + config.data_dir + "'"))
    return kUsageError;

  const std::vector<Episode> dataset = load_dataset(config.data_dir);
  TrainConfig tc;
  tc.steps = config.steps;
  tc.lr_theta = config.lr_theta;
  tc.lr_z = config.lr_z;
  tc.latent_dim = config.latent_dim;
  tc.hidden_dims = config.hidden_dims;
  tc.n_points = config.n_points;
  tc.lambda_z = config.lambda_z;
  tc.seed = config.seed;

  detail::echo_config(config);
  const std::filesystem::path out(config.out_dir);
  const TrainCallback callback = [&](std::size_t step, real_t loss,
                                     const MorpherNet& net,
                                     const LatentStore& latents) {
    if (step % 100 == 0) std::cout << step << "," << loss << "\n";
    if (config.checkpoint_every > 0 && step > 0 &&
        step % config.checkpoint_every == 0) {
      save_checkpoint(net, detail::latent_records(latents),
                      (out / ("checkpoint-" + std::to_string(step) + ".json"))
                          .string(),
                      {step, config.seed, static_cast<double>(loss)});
    }
  };
  const TrainResult result = train(dataset, tc, callback);
  save_checkpoint(result.net, detail::latent_records(result.latents),
                  (out / "checkpoint.json").string(),
                  {config.steps, config.seed,
                   static_cast<double>(result.loss_history.back())});
  write_loss_csv(result.loss_history, (out / "loss.csv").string());
  std::cout << "final," << result.loss_history.back() << "\n";
  return kOk;
}

// Loads a checkpoint, fits a latent code to (frame0, frame1) and predicts the
// next frame.
inline int cmd_predict(const RunConfig& config, bool latent_dim_explicit = false) {
  if (!detail::require(!config.out_dir.empty(), "--out is required")) return kUsageError;
  if (!detail::require(!config.checkpoint_path.empty(), "--checkpoint is required"))
    return kUsageError;
  if (!detail::require(std::filesystem::exists(config.checkpoint_path),
                       "checkpoint '" + config.checkpoint_path + "' does not exist"))
    return kUsageError;
  for (const std::string& p : {config.frame0_path, config.frame1_path})
    if (!detail::require(!p.empty() && std::filesystem::exists(p),
                         "input frame '" + p + "' does not exist"))
      return kUsageError;
  if (!detail::require(config.out_format == "xyz" || config.out_format == "ply",
                       "--format must be xyz or ply"))
    return kUsageError;

  const CheckpointData ckpt = load_checkpoint(config.checkpoint_path);
  if (latent_dim_explicit && ckpt.net.latent_dim != config.latent_dim) {
    std::cerr << "error: --latent-dim " << config.latent_dim
              << " does not match checkpoint latent_dim "
              << ckpt.net.latent_dim << "\n";
    return kUsageError;
  }

  const PointCloud frame0 = load_cloud(config.frame0_path);
  PointCloud frame1 = load_cloud(config.frame1_path);
  frame1.frame_id = frame0.frame_id + 1;

  InferConfig ic;
  ic.max_iters = config.max_iters;
  ic.lr_z = config.lr_z;
  ic.rel_tol = config.rel_tol;
  ic.patience = config.patience;
  ic.n_points = config.n_points;
  ic.seed = config.seed;

  detail::echo_config(config);
  const PredictionResult result =
      predict_future(ckpt.net, frame0, frame1, ic);

  const std::filesystem::path out(config.out_dir);
  const CloudFormat fmt =
      config.out_format == "ply" ? CloudFormat::ply : CloudFormat::xyz;
  save_cloud(result.predicted_frame,
             (out / ("predicted." + config.out_format)).string(), fmt);
  write_correspondence_csv(result.correspondence,
                           (out / "correspondence.csv").string());
  write_loss_csv(result.loss_history, (out / "loss_history.csv").string());
  std::cout << "final_loss," << result.loss_history.back() << "\n";
  return kOk;
}

// Chamfer + correspondence l2 + CMA curve of a prediction against ground
// truth; metrics.json and cma.csv.
inline int cmd_eval(const RunConfig& config) {
  if (!detail::require(!config.out_dir.empty(), "--out is required")) return kUsageError;
  for (const std::string& p : {config.pred_path, config.gt_path})
    if (!detail::require(!p.empty() && std::filesystem::exists(p),
                         "input '" + p + "' does not exist"))
      return kUsageError;

  const PointCloud pred = load_cloud(config.pred_path);
  const PointCloud gt = load_cloud(config.gt_path);

  detail::echo_config(config);
  const real_t chamfer = eval_chamfer(pred, gt);
  nlohmann::json metrics;
  metrics["chamfer"] = chamfer;
  if (pred.size() == gt.size()) {
    const CmaCurve curve =
        cumulative_matching_accuracy(pred, gt, default_cma_thresholds());
    metrics["correspondence_l2"] = correspondence_l2(pred, gt);
    detail::write_cma_csv(
        curve, (std::filesystem::path(config.out_dir) / "cma.csv").string());
  } else {
    // Index-aligned metrics are undefined for mismatched sizes.
    metrics["correspondence_l2"] = nullptr;
  }
  const std::string path =
      (std::filesystem::path(config.out_dir) / "metrics.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << metrics.dump(1) << "\n";
  std::cout << "chamfer," << chamfer << "\n";
  return kOk;
}

// Applies noise / holes / half-space cut to one input cloud.
inline int cmd_corrupt(const RunConfig& config) {
  if (!detail::require(!config.out_dir.empty(), "--out is required")) return kUsageError;
  if (!detail::require(!config.in_path.empty() &&
                           std::filesystem::exists(config.in_path),
                       "input '" + config.in_path + "' does not exist"))
    return kUsageError;

  PointCloud cloud = load_cloud(config.in_path);
  if (config.noise_sigma > 0)
    cloud = add_gaussian_noise(cloud, config.noise_sigma, mix_seed(config.seed, 1));
  if (config.holes > 0)
    cloud = cut_holes(cloud, config.holes, config.hole_radius,
                      mix_seed(config.seed, 2));
  if (config.partial_fraction > 0)
    cloud = make_partial(cloud, config.partial_fraction, mix_seed(config.seed, 3));

  detail::echo_config(config);
  const std::filesystem::path in(config.in_path);
  const std::string name = in.stem().string() + ".corrupt" + in.extension().string();
  save_cloud(cloud, (std::filesystem::path(config.out_dir) / name).string());
  std::cout << "wrote " << cloud.size() << " points\n";
  return kOk;
}

// End-to-end finite-difference check of the Chamfer->decoder gradient chain
// on a freshly initialized net.
inline int cmd_gradcheck(const RunConfig& config) {
  MorpherNet net =
      init_net(config.latent_dim, config.hidden_dims, mix_seed(config.seed, 1));

  std::mt19937_64 rng(mix_seed(config.seed, 2));
  std::normal_distribution<real_t> gauss(0, 0.5);
  PointCloud source, target;
  for (std::size_t i = 0; i < config.n_points; ++i) {
    source.points.push_back({gauss(rng), gauss(rng), gauss(rng)});
    target.points.push_back({gauss(rng), gauss(rng), gauss(rng)});
  }
  Vector z(config.latent_dim);
  std::normal_distribution<real_t> unit(0, 1);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = unit(rng);

  const GradCheckReport report =
      gradient_check(net, source, z, make_chamfer_loss(target), config.fd_step,
                     config.fd_tol, 100, config.seed);
  std::cout << "max_rel_error," << report.max_rel_error << "\n"
            << "weights_checked," << report.weights_checked << "\n"
            << "biases_checked," << report.biases_checked << "\n"
            << "latents_checked," << report.latents_checked << "\n"
            << "tolerance," << report.tol << "\n"
            << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? kOk : kRuntimeError;
}

}  // namespace motionflow
