#include "predgan/gan/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "predgan/util/digest.hpp"
#include "predgan/util/error.hpp"

namespace predgan::gan {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

const std::string& meta(const ad::Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) throw IoError("checkpoint lacks metadata '" + key + "'");
  return it->second;
}

}  // namespace

std::string NetworkConfig::digest() const {
  Digest d;
  d.update(static_cast<std::uint64_t>(n_z));
  d.update(static_cast<std::uint64_t>(rows));
  d.update(static_cast<std::uint64_t>(cols));
  d.update(join(generator_hidden));
  d.update(join(discriminator_hidden));
  d.update(leaky_slope);
  return d.hex();
}

GanModel::GanModel(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.n_z == 0 || cfg_.rows == 0 || cfg_.cols == 0) throw Error("empty network dimension");
  const std::size_t d = cfg_.window_size();
  gen_ = declare_net("generator", cfg_.n_z, cfg_.generator_hidden, d);
  disc_ = declare_net("discriminator", d, cfg_.discriminator_hidden, 1);

  z_ = graph_.input("z");
  real_ = graph_.input("real");
  fake_ = build_net(gen_, z_, true);
  graph_.set_label(fake_, "generator_output");
  std::vector<ad::NodeId> pre;
  d_real_ = build_net(disc_, real_, false, &pre);
  fake_noise_ = graph_.input("fake_noise");
  d_fake_ = build_net(disc_, graph_.add(fake_, fake_noise_), false);

  auto one_minus = [&](ad::NodeId p) { return graph_.affine(p, -1.0, 1.0); };
  const auto log_real = graph_.mean(graph_.log(d_real_));
  const auto log_fake_complement = graph_.mean(graph_.log(one_minus(d_fake_)));
  loss_d_ = graph_.affine(graph_.add(log_real, log_fake_complement), -1.0);
  loss_g_ = graph_.affine(graph_.mean(graph_.log(d_fake_)), -1.0);
  loss_g_sat_ = log_fake_complement;

  // Gradient of the real-data logits with respect to the real inputs, built
  // layer by layer from the transposed weights and the activation slopes.
  ad::NodeId gx = graph_.affine(pre.back(), 0.0, 1.0);
  for (std::size_t l = disc_.weights.size(); l-- > 0;) {
    gx = graph_.matmul(gx, graph_.transpose(disc_.weights[l]));
    if (l > 0) gx = graph_.mul(gx, graph_.leaky_slope(pre[l - 1], cfg_.leaky_slope));
  }
  const auto r1 = graph_.affine(graph_.mean(graph_.mul(gx, gx)),
                                0.5 * static_cast<double>(cfg_.window_size()));
  r1_weight_ = graph_.input("r1_weight");
  graph_.set_input(r1_weight_, ad::Tensor::scalar(0.0));
  loss_d_r1_ = graph_.add(loss_d_, graph_.mul(r1, r1_weight_));
  initialise(seed);
}

GanModel::Net GanModel::declare_net(const std::string& prefix, std::size_t in,
                                    const std::vector<std::size_t>& hidden, std::size_t out) {
  Net net;
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l + 1] == 0) throw Error(prefix + " layer " + std::to_string(l) + " is empty");
    net.weights.push_back(graph_.input(prefix + ".W" + std::to_string(l)));
    net.biases.push_back(graph_.input(prefix + ".b" + std::to_string(l)));
    graph_.set_input(net.weights.back(), ad::Tensor({sizes[l], sizes[l + 1]}));
    graph_.set_input(net.biases.back(), ad::Tensor({sizes[l + 1]}));
  }
  return net;
}

ad::NodeId GanModel::build_net(const Net& net, ad::NodeId x, bool tanh_output,
                               std::vector<ad::NodeId>* pre) {
  ad::NodeId h = x;
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = graph_.add_bias(graph_.matmul(h, net.weights[l]), net.biases[l]);
    if (pre) pre->push_back(h);
    if (l + 1 < layers) {
      h = graph_.leaky_relu(h, cfg_.leaky_slope);
    } else {
      h = tanh_output ? graph_.tanh(h) : graph_.sigmoid(h);
    }
  }
  return h;
}

void GanModel::initialise(std::uint64_t seed) {
  // He-style normal weights scaled for the leaky rectifier, zero biases.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double gain = std::sqrt(2.0 / (1.0 + cfg_.leaky_slope * cfg_.leaky_slope));
  for (const Net* net : {&gen_, &disc_}) {
    for (ad::NodeId w : net->weights) {
      ad::Tensor& t = graph_.input_value(w);
      const double scale = gain / std::sqrt(static_cast<double>(t.dim(0)));
      for (double& v : t.data()) v = scale * normal(rng);
    }
  }
}

Window GanModel::generate(std::span<const double> z) {
  if (z.size() != cfg_.n_z) {
    throw ShapeError("latent vector has length " + std::to_string(z.size()) + ", expected " +
                     std::to_string(cfg_.n_z));
  }
  graph_.set_input(z_, ad::Tensor({1, cfg_.n_z}, std::vector<double>(z.begin(), z.end())));
  const ad::NodeId target[] = {fake_};
  graph_.forward(target);
  return graph_.value(fake_).reshaped({cfg_.rows, cfg_.cols});
}

ad::Tensor GanModel::generate_batch(const ad::Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != cfg_.n_z) throw ShapeError("latent batch must be [B, n_z]");
  graph_.set_input(z_, z);
  const ad::NodeId target[] = {fake_};
  graph_.forward(target);
  return graph_.value(fake_);
}

std::vector<double> GanModel::pullback(const Window& cotangent) const {
  if (cotangent.size() != cfg_.window_size() || graph_.value(fake_).size() != cfg_.window_size()) {
    throw ShapeError("pullback needs a single-window cotangent after generate()");
  }
  const ad::NodeId wrt[] = {z_};
  auto g = graph_.backward(fake_, cotangent.reshaped(graph_.value(fake_).shape()), wrt);
  return std::move(g[0].values());
}

double GanModel::discriminate(const Window& w) {
  if (w.size() != cfg_.window_size()) throw ShapeError("window has the wrong size");
  return discriminate_batch(w.reshaped({1, cfg_.window_size()})).front();
}

std::vector<double> GanModel::discriminate_batch(const ad::Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != cfg_.window_size()) {
    throw ShapeError("discriminator batch must be [B, rows * cols]");
  }
  graph_.set_input(real_, x);
  const ad::NodeId target[] = {d_real_};
  graph_.forward(target);
  return graph_.value(d_real_).values();
}

std::vector<ad::NodeId> GanModel::parameter_ids(const Net& net) const {
  std::vector<ad::NodeId> ids;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    ids.push_back(net.weights[l]);
    ids.push_back(net.biases[l]);
  }
  return ids;
}

std::vector<ad::Tensor*> GanModel::generator_parameters() {
  std::vector<ad::Tensor*> out;
  for (ad::NodeId id : parameter_ids(gen_)) out.push_back(&graph_.input_value(id));
  return out;
}

std::vector<ad::Tensor*> GanModel::discriminator_parameters() {
  std::vector<ad::Tensor*> out;
  for (ad::NodeId id : parameter_ids(disc_)) out.push_back(&graph_.input_value(id));
  return out;
}

ad::Checkpoint GanModel::to_checkpoint() const {
  ad::Checkpoint ckpt;
  for (const Net* net : {&gen_, &disc_}) {
    for (ad::NodeId id : parameter_ids(*net)) ckpt.tensors[graph_.label(id)] = graph_.value(id);
  }
  ckpt.metadata["gan.n_z"] = std::to_string(cfg_.n_z);
  ckpt.metadata["gan.rows"] = std::to_string(cfg_.rows);
  ckpt.metadata["gan.cols"] = std::to_string(cfg_.cols);
  ckpt.metadata["gan.generator_hidden"] = join(cfg_.generator_hidden);
  ckpt.metadata["gan.discriminator_hidden"] = join(cfg_.discriminator_hidden);
  std::ostringstream slope;
  slope.precision(17);
  slope << cfg_.leaky_slope;
  ckpt.metadata["gan.leaky_slope"] = slope.str();
  ckpt.metadata["gan.network_digest"] = cfg_.digest();
  return ckpt;
}

GanModel GanModel::from_checkpoint(const ad::Checkpoint& ckpt) {
  NetworkConfig cfg;
  cfg.n_z = std::stoul(meta(ckpt, "gan.n_z"));
  cfg.rows = std::stoul(meta(ckpt, "gan.rows"));
  cfg.cols = std::stoul(meta(ckpt, "gan.cols"));
  cfg.generator_hidden = split_sizes(meta(ckpt, "gan.generator_hidden"));
  cfg.discriminator_hidden = split_sizes(meta(ckpt, "gan.discriminator_hidden"));
  cfg.leaky_slope = std::stod(meta(ckpt, "gan.leaky_slope"));
  GanModel model(cfg, 0);
  for (const Net* net : {&model.gen_, &model.disc_}) {
    for (ad::NodeId id : model.parameter_ids(*net)) {
      const std::string& name = model.graph_.label(id);
      auto it = ckpt.tensors.find(name);
      if (it == ckpt.tensors.end()) throw IoError("checkpoint lacks tensor '" + name + "'");
      if (it->second.shape() != model.graph_.value(id).shape()) {
        throw IoError("checkpoint tensor '" + name + "' has shape " +
                      ad::shape_str(it->second.shape()));
      }
      model.graph_.input_value(id) = it->second;
    }
  }
  return model;
}

}  // namespace predgan::gan
