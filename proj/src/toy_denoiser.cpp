#include "scp/toy_denoiser.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "scp/container.hpp"
#include "scp/error.hpp"
#include "scp/rng.hpp"

namespace scp {

namespace {

constexpr Magic kDenoiserMagic = {'S', 'C', 'P', 'D', 'N', 'S', 'R', '\n'};

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

Eigen::MatrixXd silu(const Eigen::MatrixXd& a) { return (a.array() * sigmoid(a.array())).matrix(); }

Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& a) {
  const Eigen::ArrayXXd s = sigmoid(a.array());
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

void fill_normal(Eigen::MatrixXd& m, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  }
}

// Row-major copy for C-order storage.
NpyArray matrix_array(const Eigen::MatrixXd& m) {
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) values[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  }
  return NpyArray::from_values<double>(
      DType::f8, {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, values);
}

Eigen::MatrixXd array_matrix(const NpyArray& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.dtype != DType::f8 || a.shape.size() != 2 || a.shape[0] != static_cast<std::size_t>(rows) ||
      a.shape[1] != static_cast<std::size_t>(cols)) {
    throw FormatError("denoiser weight array has unexpected shape or dtype");
  }
  const auto values = a.to_doubles();
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  }
  return m;
}

}  // namespace

ToyDenoiser::ToyDenoiser(int channels, int num_classes, int hidden, int blocks, ScheduleParams schedule)
    : channels_(channels),
      num_classes_(num_classes),
      hidden_(hidden),
      schedule_params_(schedule),
      schedule_(schedule.build()) {
  if (channels <= 0 || num_classes <= 0 || hidden <= 0 || blocks < 0) {
    throw ParameterError("denoiser sizes must be positive");
  }
  in_w_ = Eigen::MatrixXd::Zero(hidden, input_size());
  in_b_ = Eigen::VectorXd::Zero(hidden);
  block_w_.assign(static_cast<std::size_t>(blocks), Eigen::MatrixXd::Zero(hidden, hidden));
  block_b_.assign(static_cast<std::size_t>(blocks), Eigen::VectorXd::Zero(hidden));
  out_w_ = Eigen::MatrixXd::Zero(channels, hidden);
  out_b_ = Eigen::VectorXd::Zero(channels);
}

void ToyDenoiser::initialize(std::uint64_t seed) {
  auto rng = make_rng(seed, {kStreamInit});
  fill_normal(in_w_, std::sqrt(2.0 / input_size()), rng);
  in_b_.setZero();
  for (auto& w : block_w_) fill_normal(w, std::sqrt(0.5 / hidden_), rng);
  for (auto& b : block_b_) b.setZero();
  fill_normal(out_w_, 0.1 / std::sqrt(hidden_), rng);
  out_b_.setZero();
}

Eigen::MatrixXd ToyDenoiser::build_inputs(const LatentImage& x_t, int t, const LabelMask& token_mask) const {
  if (x_t.channels() != channels_) throw ShapeError("latent channel count does not match the denoiser");
  if (token_mask.height() != x_t.height() || token_mask.width() != x_t.width()) {
    throw ShapeError("denoiser mask must be at token resolution");
  }
  const int h = x_t.height();
  const int w = x_t.width();
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(input_size(), static_cast<Eigen::Index>(h) * w);
  const double ab = schedule_.alpha_bar(t);
  const double phase = std::numbers::pi * t / schedule_.total_steps();
  const Eigen::Index time_row = 9 * channels_ + num_classes_;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * w + x;
      Eigen::Index row = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
            for (int c = 0; c < channels_; ++c) in(row + c, col) = x_t.at(yy, xx, c);
          }
          row += channels_;
        }
      }
      const int cls = token_mask.at(y, x);
      if (cls != token_mask.ignore_id() && cls >= 0 && cls < num_classes_) in(row + cls, col) = 1.0;
      in(time_row, col) = std::sqrt(ab);
      in(time_row + 1, col) = std::sqrt(1.0 - ab);
      in(time_row + 2, col) = std::sin(phase);
      in(time_row + 3, col) = std::cos(phase);
    }
  }
  return in;
}

Eigen::MatrixXd ToyDenoiser::forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd h = silu((in_w_ * inputs).colwise() + in_b_);
  for (std::size_t k = 0; k < block_w_.size(); ++k) h += silu((block_w_[k] * h).colwise() + block_b_[k]);
  return (out_w_ * h).colwise() + out_b_;
}

LatentImage ToyDenoiser::predict(const LatentImage& x_t, int t, const LabelMask& token_mask) const {
  const Eigen::MatrixXd out = forward(build_inputs(x_t, t, token_mask));
  LatentImage eps(x_t.height(), x_t.width(), x_t.channels());
  auto e = eps.data();
  for (Eigen::Index col = 0; col < out.cols(); ++col) {
    for (int c = 0; c < channels_; ++c) e[static_cast<std::size_t>(col * channels_ + c)] = out(c, col);
  }
  return eps;
}

double ToyDenoiser::loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                         Eigen::VectorXd* gradient) const {
  if (inputs.rows() != input_size() || targets.rows() != channels_ || inputs.cols() != targets.cols() ||
      inputs.cols() == 0) {
    throw ShapeError("loss: inputs/targets do not match the denoiser");
  }
  const double n = static_cast<double>(inputs.cols());
  const std::size_t blocks = block_w_.size();

  // Forward, keeping pre-activations.
  std::vector<Eigen::MatrixXd> pre(blocks + 1);
  std::vector<Eigen::MatrixXd> act(blocks + 1);
  pre[0] = (in_w_ * inputs).colwise() + in_b_;
  act[0] = silu(pre[0]);
  for (std::size_t k = 0; k < blocks; ++k) {
    pre[k + 1] = (block_w_[k] * act[k]).colwise() + block_b_[k];
    act[k + 1] = act[k] + silu(pre[k + 1]);
  }
  const Eigen::MatrixXd out = (out_w_ * act[blocks]).colwise() + out_b_;
  const Eigen::MatrixXd diff = out - targets;
  const double value = diff.squaredNorm() / n;
  if (gradient == nullptr) return value;

  // Backward.
  const Eigen::MatrixXd d_out = (2.0 / n) * diff;
  const Eigen::MatrixXd g_out_w = d_out * act[blocks].transpose();
  const Eigen::VectorXd g_out_b = d_out.rowwise().sum();
  Eigen::MatrixXd d_h = out_w_.transpose() * d_out;
  std::vector<Eigen::MatrixXd> g_block_w(blocks);
  std::vector<Eigen::VectorXd> g_block_b(blocks);
  for (std::size_t k = blocks; k-- > 0;) {
    const Eigen::MatrixXd d_pre = (d_h.array() * silu_grad(pre[k + 1]).array()).matrix();
    g_block_w[k] = d_pre * act[k].transpose();
    g_block_b[k] = d_pre.rowwise().sum();
    d_h += block_w_[k].transpose() * d_pre;
  }
  const Eigen::MatrixXd d_in = (d_h.array() * silu_grad(pre[0]).array()).matrix();
  const Eigen::MatrixXd g_in_w = d_in * inputs.transpose();
  const Eigen::VectorXd g_in_b = d_in.rowwise().sum();

  gradient->resize(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  auto put = [&](const auto& m) {
    gradient->segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    pos += m.size();
  };
  put(g_in_w);
  put(g_in_b);
  for (std::size_t k = 0; k < blocks; ++k) {
    put(g_block_w[k]);
    put(g_block_b[k]);
  }
  put(g_out_w);
  put(g_out_b);
  return value;
}

std::size_t ToyDenoiser::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(in_w_.size() + in_b_.size() + out_w_.size() + out_b_.size());
  for (std::size_t k = 0; k < block_w_.size(); ++k) n += static_cast<std::size_t>(block_w_[k].size() + block_b_[k].size());
  return n;
}

Eigen::VectorXd ToyDenoiser::parameters() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  auto put = [&](const auto& m) {
    p.segment(pos, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    pos += m.size();
  };
  put(in_w_);
  put(in_b_);
  for (std::size_t k = 0; k < block_w_.size(); ++k) {
    put(block_w_[k]);
    put(block_b_[k]);
  }
  put(out_w_);
  put(out_b_);
  return p;
}

void ToyDenoiser::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(parameter_count())) throw ShapeError("parameter vector size mismatch");
  Eigen::Index pos = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = p.segment(pos, m.size());
    pos += m.size();
  };
  take(in_w_);
  take(in_b_);
  for (std::size_t k = 0; k < block_w_.size(); ++k) {
    take(block_w_[k]);
    take(block_b_[k]);
  }
  take(out_w_);
  take(out_b_);
}

std::vector<std::byte> ToyDenoiser::encode() const {
  nlohmann::json meta = {
      {"format", "scp-toy-denoiser"},
      {"channels", channels_},
      {"num_classes", num_classes_},
      {"hidden", hidden_},
      {"blocks", blocks()},
      {"schedule",
       {{"steps", schedule_params_.steps},
        {"beta_start", schedule_params_.beta_start},
        {"beta_end", schedule_params_.beta_end}}},
      {"final_loss", final_loss},
      {"heldout_loss", heldout_loss},
      {"baseline_loss", baseline_loss},
  };
  Container c;
  c.metadata = meta.dump();
  c.add("in_w", matrix_array(in_w_));
  c.add("in_b", matrix_array(in_b_));
  for (std::size_t k = 0; k < block_w_.size(); ++k) {
    c.add("block" + std::to_string(k) + "_w", matrix_array(block_w_[k]));
    c.add("block" + std::to_string(k) + "_b", matrix_array(block_b_[k]));
  }
  c.add("out_w", matrix_array(out_w_));
  c.add("out_b", matrix_array(out_b_));
  return encode_container(kDenoiserMagic, kDenoiserFormatVersion, c);
}

ToyDenoiser ToyDenoiser::decode(std::span<const std::byte> bytes) {
  const Container c = decode_container(kDenoiserMagic, kDenoiserFormatVersion, bytes);
  ToyDenoiser model;
  try {
    const auto meta = nlohmann::json::parse(c.metadata);
    ScheduleParams sp;
    sp.steps = meta.at("schedule").at("steps").get<int>();
    sp.beta_start = meta.at("schedule").at("beta_start").get<double>();
    sp.beta_end = meta.at("schedule").at("beta_end").get<double>();
    model = ToyDenoiser(meta.at("channels").get<int>(), meta.at("num_classes").get<int>(),
                        meta.at("hidden").get<int>(), meta.at("blocks").get<int>(), sp);
    model.final_loss = meta.at("final_loss").get<double>();
    model.heldout_loss = meta.at("heldout_loss").get<double>();
    model.baseline_loss = meta.at("baseline_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("denoiser metadata invalid: ") + e.what());
  }
  const Eigen::Index hid = model.hidden_;
  model.in_w_ = array_matrix(c.array("in_w"), hid, model.input_size());
  model.in_b_ = array_matrix(c.array("in_b"), hid, 1);
  for (std::size_t k = 0; k < model.block_w_.size(); ++k) {
    model.block_w_[k] = array_matrix(c.array("block" + std::to_string(k) + "_w"), hid, hid);
    model.block_b_[k] = array_matrix(c.array("block" + std::to_string(k) + "_b"), hid, 1);
  }
  model.out_w_ = array_matrix(c.array("out_w"), model.channels_, hid);
  model.out_b_ = array_matrix(c.array("out_b"), model.channels_, 1);
  return model;
}

void ToyDenoiser::save(const std::filesystem::path& path) const { write_file_bytes(path, encode()); }

ToyDenoiser ToyDenoiser::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TrainingBatch sample_batch(const ToyDenoiser& model, std::span<const CorpusRecord> records, int images,
                           int tokens_per_image, std::uint64_t seed) {
  if (records.empty()) throw ParameterError("cannot sample a training batch from no records");
  auto rng = Rng(seed);
  const auto& schedule = model.schedule();
  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  std::uniform_int_distribution<int> step(1, schedule.total_steps());
  TrainingBatch batch;
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> targets;
  Eigen::Index total = 0;
  for (int i = 0; i < images; ++i) {
    const auto& record = records[pick(rng)];
    const int t = step(rng);
    const auto& x0 = record.latent;
    const LatentImage eps = normal_latent(x0.height(), x0.width(), x0.channels(), rng);
    const LatentImage x_t = forward_noise(x0, t, eps, schedule);
    const Eigen::MatrixXd all = model.build_inputs(x_t, t, record.token_mask());
    std::vector<Eigen::Index> cols(static_cast<std::size_t>(all.cols()));
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    cols.resize(std::min<std::size_t>(cols.size(), static_cast<std::size_t>(tokens_per_image)));
    Eigen::MatrixXd in(all.rows(), static_cast<Eigen::Index>(cols.size()));
    Eigen::MatrixXd target(x0.channels(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      in.col(static_cast<Eigen::Index>(j)) = all.col(cols[j]);
      for (int c = 0; c < x0.channels(); ++c) {
        target(c, static_cast<Eigen::Index>(j)) = eps.data()[static_cast<std::size_t>(cols[j] * x0.channels() + c)];
      }
    }
    total += in.cols();
    inputs.push_back(std::move(in));
    targets.push_back(std::move(target));
  }
  batch.inputs.resize(model.input_size(), total);
  batch.targets.resize(model.channels(), total);
  Eigen::Index pos = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    batch.inputs.middleCols(pos, inputs[i].cols()) = inputs[i];
    batch.targets.middleCols(pos, targets[i].cols()) = targets[i];
    pos += inputs[i].cols();
  }
  return batch;
}

TrainingResult train_toy_denoiser(std::span<const CorpusRecord> corpus, const ScheduleParams& schedule,
                                  int num_classes, const DenoiserConfig& config, std::uint64_t seed) {
  if (corpus.empty()) throw ParameterError("cannot train on an empty corpus");
  if (config.steps < 1 || config.batch_images < 1 || config.tokens_per_image < 1) {
    throw ParameterError("training budget must be positive");
  }
  const int channels = corpus.front().latent.channels();
  std::size_t heldout = static_cast<std::size_t>(std::floor(config.holdout_fraction * corpus.size()));
  if (corpus.size() > 1) heldout = std::clamp<std::size_t>(heldout, 1, corpus.size() - 1);
  else heldout = 0;
  const auto train = corpus.first(corpus.size() - heldout);
  const auto held = heldout > 0 ? corpus.last(heldout) : corpus;

  TrainingResult result;
  result.model = ToyDenoiser(channels, num_classes, config.hidden, config.blocks, schedule);
  auto& model = result.model;
  model.initialize(seed);

  Eigen::VectorXd params = model.parameters();
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad;
  const std::size_t tail = std::max<std::size_t>(1, static_cast<std::size_t>(config.steps) / 20);
  double tail_sum = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    const auto batch = sample_batch(model, train, config.batch_images, config.tokens_per_image,
                                    derive_seed(seed, {kStreamTraining, static_cast<std::uint64_t>(step)}));
    const double value = model.loss(batch.inputs, batch.targets, &grad);
    if (!std::isfinite(value)) throw TrainingError(static_cast<std::size_t>(step), "loss is not finite");
    const double norm = grad.norm();
    if (norm > config.grad_clip) grad *= config.grad_clip / norm;
    const double frac = config.steps == 1 ? 1.0 : static_cast<double>(step) / (config.steps - 1);
    const double lr = config.learning_rate + frac * (config.final_learning_rate - config.learning_rate);
    velocity = config.momentum * velocity - lr * grad;
    params += velocity;
    if (!params.allFinite()) throw TrainingError(static_cast<std::size_t>(step), "parameters are not finite");
    model.set_parameters(params);
    if (static_cast<std::size_t>(config.steps - step) <= tail) tail_sum += value;
  }
  result.final_loss = tail_sum / static_cast<double>(tail);

  const auto probe = sample_batch(model, held, config.heldout_images, 1 << 20,
                                  derive_seed(seed, {kStreamEvaluation}));
  result.heldout_loss = model.loss(probe.inputs, probe.targets, nullptr);
  result.baseline_loss = probe.targets.squaredNorm() / static_cast<double>(probe.targets.cols());
  model.final_loss = result.final_loss;
  model.heldout_loss = result.heldout_loss;
  model.baseline_loss = result.baseline_loss;
  return result;
}

}  // namespace scp
