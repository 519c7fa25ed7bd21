#include "cxnprobe/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "cxnprobe/error.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {
namespace {

// Armijo sufficient-decrease constant and step growth between iterations.
constexpr double kArmijo = 1e-4;
constexpr double kStepGrowth = 2.0;
constexpr double kMinStep = 1e-18;

Eigen::MatrixXd weights_as_double(const ProbeModel& model) {
  Eigen::MatrixXd w(model.n_classes, model.dim);
  for (std::size_t c = 0; c < model.n_classes; ++c) {
    for (std::size_t d = 0; d < model.dim; ++d) w(c, d) = model.weights[c * model.dim + d];
  }
  return w;
}

Eigen::VectorXd bias_as_double(const ProbeModel& model) {
  Eigen::VectorXd b(model.n_classes);
  for (std::size_t c = 0; c < model.n_classes; ++c) b(c) = model.bias[c];
  return b;
}

template <typename T>
Prediction predict_impl(const ProbeModel& model, std::span<const T> feature) {
  if (feature.size() != model.dim) {
    throw Error("feature has dimension " + std::to_string(feature.size()) + ", model expects " +
                std::to_string(model.dim));
  }
  std::vector<double> logits(model.n_classes);
  for (std::size_t c = 0; c < model.n_classes; ++c) {
    double z = model.bias[c];
    const float* row = model.weights.data() + c * model.dim;
    for (std::size_t d = 0; d < model.dim; ++d) z += static_cast<double>(row[d]) * static_cast<double>(feature[d]);
    logits[c] = z;
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  Prediction out;
  out.probabilities.resize(model.n_classes);
  for (std::size_t c = 0; c < model.n_classes; ++c) {
    out.probabilities[c] = std::exp(logits[c] - max_logit);
    total += out.probabilities[c];
  }
  for (auto& p : out.probabilities) p /= total;
  out.class_id = 0;
  for (std::size_t c = 1; c < model.n_classes; ++c) {
    if (logits[c] > logits[static_cast<std::size_t>(out.class_id)]) out.class_id = static_cast<int>(c);
  }
  return out;
}

}  // namespace

std::string_view to_string(ProbeTask task) { return task == ProbeTask::kFormBinary ? "form" : "sense"; }

ProbeTask parse_task(std::string_view text) {
  if (text == "form" || text == "FORM_BINARY") return ProbeTask::kFormBinary;
  if (text == "sense" || text == "SENSE_3WAY") return ProbeTask::kSense3Way;
  throw Error("unknown probe task '" + std::string(text) + "' (expected form or sense)");
}

std::size_t class_count(ProbeTask task) { return task == ProbeTask::kFormBinary ? 2 : 3; }

std::string_view class_name(ProbeTask task, std::size_t class_id) {
  static constexpr std::string_view kForm[] = {"DISTRACTOR", "CONSTRUCTION"};
  static constexpr std::string_view kSense[] = {"SUCCESSION", "JUXTAPOSITION", "DISTRACTOR"};
  if (class_id >= class_count(task)) throw Error("class id out of range");
  return task == ProbeTask::kFormBinary ? kForm[class_id] : kSense[class_id];
}

std::optional<int> task_class(ProbeTask task, SemanticLabel label) {
  switch (label) {
    case SemanticLabel::kSuccession:
      return task == ProbeTask::kFormBinary ? 1 : 0;
    case SemanticLabel::kJuxtaposition:
      return 1;
    case SemanticLabel::kDistractor:
      return task == ProbeTask::kFormBinary ? 0 : 2;
    case SemanticLabel::kOtherConstruction:
      return std::nullopt;
  }
  return std::nullopt;
}

std::string_view to_string(ProbeSystem system) {
  switch (system) {
    case ProbeSystem::kProbe:
      return "probe";
    case ProbeSystem::kControl:
      return "control";
    case ProbeSystem::kStatic:
      return "static";
  }
  return "?";
}

ProbeSystem parse_system(std::string_view text) {
  if (text == "probe" || text == "PROBE") return ProbeSystem::kProbe;
  if (text == "control" || text == "CONTROL") return ProbeSystem::kControl;
  if (text == "static" || text == "STATIC") return ProbeSystem::kStatic;
  throw Error("unknown system '" + std::string(text) + "'");
}

std::string ProbeModel::stem() const {
  auto s = fmt::format("{}-{}-s{}-n{}", to_string(task), to_string(system), seed, train_size);
  if (layer >= 0) s += fmt::format("-l{:02d}", layer);
  return s;
}

double softmax_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& weights,
                    const Eigen::VectorXd& bias, double l2_lambda, Eigen::MatrixXd* grad_weights,
                    Eigen::VectorXd* grad_bias) {
  const auto n = features.rows();
  const auto c = weights.rows();
  Eigen::MatrixXd logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();

  double loss = 0.0;
  Eigen::MatrixXd residual(n, c);  // softmax - one_hot
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      residual(i, k) = std::exp(logits(i, k) - m);
      total += residual(i, k);
    }
    const auto y = labels[static_cast<std::size_t>(i)];
    loss += std::log(total) + m - logits(i, y);
    residual.row(i) /= total;
    residual(i, y) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  loss = loss * inv_n + 0.5 * l2_lambda * weights.squaredNorm();

  if (grad_weights) *grad_weights = inv_n * residual.transpose() * features + l2_lambda * weights;
  if (grad_bias) *grad_bias = inv_n * residual.colwise().sum().transpose();
  return loss;
}

ProbeModel train_probe(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t n_classes,
                       const TrainHyper& hyper, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) throw Error("feature rows and labels differ in count");
  if (n_classes < 2) throw Error("a probe needs at least two classes");
  if (n < n_classes) throw Error("need at least as many training points as classes");
  if (!(hyper.l2_lambda >= 0.0) || hyper.max_iters < 0 || !(hyper.tol > 0.0)) throw Error("bad hyperparameters");
  std::set<int> distinct;
  for (const int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw Error("label " + std::to_string(y) + " out of range");
    distinct.insert(y);
  }
  if (distinct.size() < 2) throw Error("single-class training set");
  if (!features.allFinite()) throw Error("non-finite feature values");

  const auto d = static_cast<Eigen::Index>(features.cols());
  const auto c = static_cast<Eigen::Index>(n_classes);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(c);
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;

  TrainingMeta meta;
  double loss = softmax_loss(features, labels, w, b, hyper.l2_lambda, &gw, &gb);
  meta.initial_loss = loss;
  double step = 1.0;
  for (int it = 0; it < hyper.max_iters; ++it) {
    const double gmax = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (gmax < hyper.tol) {
      meta.converged = true;
      break;
    }
    const double gnorm2 = gw.squaredNorm() + gb.squaredNorm();
    double t = step * kStepGrowth;
    Eigen::MatrixXd w_next;
    Eigen::VectorXd b_next;
    double next_loss = 0.0;
    bool accepted = false;
    while (t >= kMinStep) {
      w_next = w - t * gw;
      b_next = b - t * gb;
      next_loss = softmax_loss(features, labels, w_next, b_next, hyper.l2_lambda);
      if (next_loss <= loss - kArmijo * t * gnorm2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no descent at machine precision
    w = std::move(w_next);
    b = std::move(b_next);
    step = t;
    loss = softmax_loss(features, labels, w, b, hyper.l2_lambda, &gw, &gb);
    meta.iterations = it + 1;
  }
  if (!meta.converged) {
    meta.converged = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()) < hyper.tol;
  }

  ProbeModel model;
  model.seed = seed;
  model.n_classes = n_classes;
  model.dim = static_cast<std::size_t>(d);
  model.hyper = hyper;
  model.weights.resize(n_classes * model.dim);
  model.bias.resize(n_classes);
  for (Eigen::Index k = 0; k < c; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      model.weights[static_cast<std::size_t>(k) * model.dim + static_cast<std::size_t>(j)] = static_cast<float>(w(k, j));
    }
    model.bias[static_cast<std::size_t>(k)] = static_cast<float>(b(k));
  }
  // Report the loss and gradient of the stored float32 weights.
  meta.final_loss = softmax_loss(features, labels, weights_as_double(model), bias_as_double(model), hyper.l2_lambda,
                                 &gw, &gb);
  meta.grad_max_norm = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
  model.meta = meta;
  return model;
}

Prediction predict(const ProbeModel& model, std::span<const float> feature) { return predict_impl(model, feature); }
Prediction predict(const ProbeModel& model, std::span<const double> feature) { return predict_impl(model, feature); }

ControlLabeler::ControlLabeler(std::uint64_t control_seed, std::size_t n_classes)
    : seed_(control_seed), n_classes_(n_classes) {
  if (n_classes < 2) throw Error("control labels need at least two classes");
}

int ControlLabeler::label(std::string_view word) const {
  const auto h = fnv1a64(fold_case(word), fnv1a64_u64(seed_));
  return static_cast<int>(h % n_classes_);
}

std::vector<int> control_labels(const ControlLabeler& labeler, std::span<const NtoNInstance> instances) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(labeler.label(inst.first_noun().form));
  return out;
}

// ---------------------------------------------------------------------------

std::filesystem::path write_model(const ProbeModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto stem = model.stem();
  if (model.weights.size() != model.n_classes * model.dim || model.bias.size() != model.n_classes) {
    throw Error("model " + stem + " has inconsistent weight shapes");
  }

  std::string weights;
  weights.reserve(4 * (model.weights.size() + model.bias.size()));
  const auto put = [&weights](float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) weights.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
  };
  for (const float v : model.weights) put(v);
  for (const float v : model.bias) put(v);

  nlohmann::ordered_json h;
  h["format"] = "cxnprobe-model/1";
  h["task"] = std::string(to_string(model.task));
  h["system"] = std::string(to_string(model.system));
  h["layer"] = model.layer;
  h["seed"] = model.seed;
  h["train_size"] = model.train_size;
  h["control_seed"] = model.control_seed;
  h["n_classes"] = model.n_classes;
  h["dim"] = model.dim;
  h["hyper"] = {{"l2_lambda", model.hyper.l2_lambda}, {"max_iters", model.hyper.max_iters}, {"tol", model.hyper.tol}};
  h["training"] = {{"iterations", model.meta.iterations},
                   {"initial_loss", model.meta.initial_loss},
                   {"final_loss", model.meta.final_loss},
                   {"grad_max_norm", model.meta.grad_max_norm},
                   {"converged", model.meta.converged}};
  h["weights_file"] = stem + ".f32";

  write_file_atomic(dir / (stem + ".f32"), weights);
  const auto header_path = dir / (stem + ".json");
  write_file_atomic(header_path, h.dump(2) + "\n");
  return header_path;
}

ProbeModel read_model(const std::filesystem::path& header_path) {
  ProbeModel model;
  std::string weights_file;
  try {
    const auto h = nlohmann::json::parse(read_file(header_path));
    if (h.at("format").get<std::string>() != "cxnprobe-model/1") throw Error("not a model header");
    model.task = parse_task(h.at("task").get<std::string>());
    model.system = parse_system(h.at("system").get<std::string>());
    model.layer = h.at("layer").get<int>();
    model.seed = h.at("seed").get<std::uint64_t>();
    model.train_size = h.at("train_size").get<std::size_t>();
    model.control_seed = h.at("control_seed").get<std::uint64_t>();
    model.n_classes = h.at("n_classes").get<std::size_t>();
    model.dim = h.at("dim").get<std::size_t>();
    const auto& hy = h.at("hyper");
    model.hyper = TrainHyper{hy.at("l2_lambda").get<double>(), hy.at("max_iters").get<int>(), hy.at("tol").get<double>()};
    const auto& tr = h.at("training");
    model.meta.iterations = tr.at("iterations").get<int>();
    model.meta.initial_loss = tr.at("initial_loss").get<double>();
    model.meta.final_loss = tr.at("final_loss").get<double>();
    model.meta.grad_max_norm = tr.at("grad_max_norm").get<double>();
    model.meta.converged = tr.at("converged").get<bool>();
    weights_file = h.at("weights_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_path.string(), 0, e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(header_path.string(), 0, e.what());
  }
  if (model.task == ProbeTask::kFormBinary || model.task == ProbeTask::kSense3Way) {
    if (model.n_classes != class_count(model.task)) {
      throw FormatError(header_path.string(), 0, "n_classes does not match the task");
    }
  }

  const auto weights_path = header_path.parent_path() / weights_file;
  const auto bytes = read_file(weights_path);
  const std::size_t expected = 4 * (model.n_classes * model.dim + model.n_classes);
  if (bytes.size() != expected) {
    throw FormatError(weights_path.string(), 0,
                      "expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto get = [&p]() {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    p += 4;
    return std::bit_cast<float>(bits);
  };
  model.weights.resize(model.n_classes * model.dim);
  model.bias.resize(model.n_classes);
  for (auto& v : model.weights) v = get();
  for (auto& v : model.bias) v = get();
  return model;
}

std::vector<LoadedModel> load_models(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("model directory not found: " + dir.string());
  std::vector<std::filesystem::path> headers;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    auto sibling = entry.path();
    sibling.replace_extension(".f32");
    if (std::filesystem::exists(sibling)) headers.push_back(entry.path());
  }
  std::vector<LoadedModel> out;
  for (const auto& path : headers) {
    LoadedModel lm;
    lm.model = read_model(path);
    lm.header_path = path;
    auto weights = path;
    weights.replace_extension(".f32");
    lm.digest = fnv1a64(read_file(weights), fnv1a64(read_file(path)));
    out.push_back(std::move(lm));
  }
  std::sort(out.begin(), out.end(), [](const LoadedModel& a, const LoadedModel& b) {
    return a.model.stem() < b.model.stem();
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].model.stem() == out[i - 1].model.stem()) {
      throw Error("duplicate model " + out[i].model.stem() + " under " + dir.string());
    }
  }
  return out;
}

}  // namespace cxnprobe
