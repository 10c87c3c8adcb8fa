#include "semkd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "semkd/errors.hpp"

namespace semkd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void xavier_fill(Mat& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void he_fill(Mat& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

Vec relu(const Vec& v) { return v.cwiseMax(0.0); }

Vec relu_mask(const Vec& pre, const Vec& grad) {
  return (pre.array() > 0.0).select(grad, 0.0);
}

std::span<double> flat(Mat& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> flat(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void check_dim(const Vec& v, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    throw ShapeError(std::string(what) + " has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(expected));
  }
}

}  // namespace

Dense make_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  Dense layer{Mat(out, in), Vec::Zero(out)};
  he_fill(layer.weight, rng);
  return layer;
}

// ---------------------------------------------------------------- backbones

Vec MlpBackbone::forward(const Vec& x, Trace* trace) const {
  Vec a = x;
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  for (const auto& layer : layers) {
    Vec pre = layer.apply(a);
    if (trace) {
      trace->inputs.push_back(a);
      trace->pre.push_back(pre);
    }
    a = relu(pre);
  }
  return a;
}

void MlpBackbone::backward(const Trace& trace, const Vec& grad_out, MlpBackbone& grads) const {
  Vec delta = grad_out;
  for (std::size_t i = layers.size(); i-- > 0;) {
    delta = relu_mask(trace.pre[i], delta);
    grads.layers[i].weight.noalias() += delta * trace.inputs[i].transpose();
    grads.layers[i].bias += delta;
    if (i > 0) delta = layers[i].weight.transpose() * delta;
  }
}

namespace {

Mat im2col(const Mat& in, const InputShape& s) {
  const auto H = static_cast<Eigen::Index>(s.height);
  const auto W = static_cast<Eigen::Index>(s.width);
  const auto C = static_cast<Eigen::Index>(s.channels);
  Mat col = Mat::Zero(C * 9, H * W);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index ky = 0; ky < 3; ++ky) {
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (Eigen::Index x = 0; x < W; ++x) {
            const Eigen::Index sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            col(row, y * W + x) = in(c, sy * W + sx);
          }
        }
      }
    }
  }
  return col;
}

Mat col2im(const Mat& col, const InputShape& s) {
  const auto H = static_cast<Eigen::Index>(s.height);
  const auto W = static_cast<Eigen::Index>(s.width);
  const auto C = static_cast<Eigen::Index>(s.channels);
  Mat out = Mat::Zero(C, H * W);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (Eigen::Index ky = 0; ky < 3; ++ky) {
      for (Eigen::Index kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (Eigen::Index x = 0; x < W; ++x) {
            const Eigen::Index sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            out(c, sy * W + sx) += col(row, y * W + x);
          }
        }
      }
    }
  }
  return out;
}

Mat avg_pool2(const Mat& act, const InputShape& s) {
  const std::size_t oh = s.height / 2, ow = s.width / 2;
  Mat out = Mat::Zero(act.rows(), static_cast<Eigen::Index>(oh * ow));
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const auto o = static_cast<Eigen::Index>(y * ow + x);
      const auto a = static_cast<Eigen::Index>(2 * y * s.width + 2 * x);
      const auto w = static_cast<Eigen::Index>(s.width);
      out.col(o) = 0.25 * (act.col(a) + act.col(a + 1) + act.col(a + w) + act.col(a + w + 1));
    }
  }
  return out;
}

Mat avg_pool2_backward(const Mat& grad, const InputShape& s) {
  const std::size_t oh = s.height / 2, ow = s.width / 2;
  Mat out = Mat::Zero(grad.rows(), static_cast<Eigen::Index>(s.height * s.width));
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const auto o = static_cast<Eigen::Index>(y * ow + x);
      const auto a = static_cast<Eigen::Index>(2 * y * s.width + 2 * x);
      const auto w = static_cast<Eigen::Index>(s.width);
      const Vec g = 0.25 * grad.col(o);
      out.col(a) += g;
      out.col(a + 1) += g;
      out.col(a + w) += g;
      out.col(a + w + 1) += g;
    }
  }
  return out;
}

}  // namespace

Vec ConvBackbone::forward(const Vec& x, Trace* trace) const {
  check_dim(x, input.size(), "image input");
  Mat act = Eigen::Map<const RowMat>(x.data(), static_cast<Eigen::Index>(input.channels),
                                     static_cast<Eigen::Index>(input.height * input.width));
  InputShape shape = input;
  if (trace) *trace = Trace{};
  for (const auto& conv : convs) {
    Mat col = im2col(act, shape);
    Mat pre = conv.kernel * col;
    pre.colwise() += conv.bias;
    Mat activated = pre.cwiseMax(0.0);
    if (trace) {
      trace->cols.push_back(std::move(col));
      trace->pre.push_back(pre);
      trace->in.push_back(shape);
    }
    shape.channels = static_cast<std::size_t>(conv.kernel.rows());
    act = avg_pool2(activated, shape);
    shape.height /= 2;
    shape.width /= 2;
  }
  Vec pooled = act.rowwise().mean();
  Vec proj_pre = projection.apply(pooled);
  if (trace) {
    trace->pooled = pooled;
    trace->proj_pre = proj_pre;
  }
  return relu(proj_pre);
}

void ConvBackbone::backward(const Trace& trace, const Vec& grad_out, ConvBackbone& grads) const {
  Vec delta = relu_mask(trace.proj_pre, grad_out);
  grads.projection.weight.noalias() += delta * trace.pooled.transpose();
  grads.projection.bias += delta;
  Vec d_pooled = projection.weight.transpose() * delta;

  InputShape last = trace.in.back();
  last.height /= 2;
  last.width /= 2;
  const auto positions = static_cast<Eigen::Index>(last.height * last.width);
  Mat d_act = d_pooled.replicate(1, positions) / static_cast<double>(positions);

  for (std::size_t b = convs.size(); b-- > 0;) {
    InputShape pre_shape = trace.in[b];
    pre_shape.channels = static_cast<std::size_t>(convs[b].kernel.rows());
    Mat d_pre = avg_pool2_backward(d_act, pre_shape);
    d_pre = (trace.pre[b].array() > 0.0).select(d_pre, 0.0);
    grads.convs[b].kernel.noalias() += d_pre * trace.cols[b].transpose();
    grads.convs[b].bias += d_pre.rowwise().sum();
    if (b > 0) {
      Mat d_col = convs[b].kernel.transpose() * d_pre;
      d_act = col2im(d_col, trace.in[b]);
    }
  }
}

const char* to_string(BackboneKind k) { return k == BackboneKind::mlp ? "mlp" : "cnn"; }

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "mlp") return BackboneKind::mlp;
  if (s == "cnn") return BackboneKind::cnn;
  throw ConfigError("unknown backbone '" + s + "' (expected mlp or cnn)");
}

bool FrozenFlags::is_frozen(Component c) const {
  switch (c) {
    case Component::backbone: return backbone;
    case Component::embeddings: return embeddings;
    case Component::attention: return attention;
    case Component::mapping: return mapping;
  }
  return true;
}

// ------------------------------------------------------------ construction

ModelState init_model(const ModelConfig& config, const InputShape& input, std::size_t semantic_dim,
                      std::uint64_t seed) {
  if (config.u == 0 || semantic_dim == 0 || config.num_superclasses == 0 ||
      config.attention_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (input.size() == 0) throw ConfigError("input shape is empty");
  const auto u = static_cast<Eigen::Index>(config.u);

  ModelState state;
  state.config = config;
  state.dims = ModelDims{input, config.u, semantic_dim, config.num_superclasses,
                         config.attention_hidden};

  Rng rng(derive_seed(seed, "model.backbone"));
  if (config.backbone == BackboneKind::mlp) {
    if (input.is_image()) throw ConfigError("mlp backbone expects feature-vector input");
    MlpBackbone mlp;
    auto in = static_cast<Eigen::Index>(input.size());
    for (auto h : config.backbone_hidden) {
      if (h == 0) throw ConfigError("backbone hidden width must be positive");
      mlp.layers.push_back(make_dense(in, static_cast<Eigen::Index>(h), rng));
      in = static_cast<Eigen::Index>(h);
    }
    mlp.layers.push_back(make_dense(in, u, rng));
    state.backbone = std::move(mlp);
  } else {
    if (config.conv_channels.size() != 3) throw ConfigError("cnn backbone needs three conv blocks");
    if (input.height < 8 || input.width < 8) throw ConfigError("cnn input must be at least 8x8");
    ConvBackbone cnn;
    cnn.input = input;
    auto in_ch = static_cast<Eigen::Index>(input.channels);
    for (auto ch : config.conv_channels) {
      if (ch == 0) throw ConfigError("conv channel count must be positive");
      ConvBackbone::Conv conv{Mat(static_cast<Eigen::Index>(ch), in_ch * 9),
                              Vec::Zero(static_cast<Eigen::Index>(ch))};
      he_fill(conv.kernel, rng);
      cnn.convs.push_back(std::move(conv));
      in_ch = static_cast<Eigen::Index>(ch);
    }
    cnn.projection = make_dense(in_ch, u, rng);
    state.backbone = std::move(cnn);
  }

  Rng head_rng(derive_seed(seed, "model.head"));
  for (std::size_t k = 0; k < config.num_superclasses; ++k) {
    Dense e{Mat(u, u), Vec::Zero(u)};
    xavier_fill(e.weight, head_rng);
    state.head.embeddings.push_back(std::move(e));
  }
  const auto L = static_cast<Eigen::Index>(config.attention_hidden);
  state.head.attention.V = Mat(L, u);
  xavier_fill(state.head.attention.V, head_rng);
  Mat w(L, 1);
  xavier_fill(w, head_rng);
  state.head.attention.w = w.col(0);

  Eigen::Index in = 2 * u;
  for (auto h : config.mapping_hidden) {
    if (h == 0) throw ConfigError("mapping hidden width must be positive");
    state.head.mapping.push_back(make_dense(in, static_cast<Eigen::Index>(h), head_rng));
    in = static_cast<Eigen::Index>(h);
  }
  Dense out{Mat(static_cast<Eigen::Index>(semantic_dim), in),
            Vec::Zero(static_cast<Eigen::Index>(semantic_dim))};
  xavier_fill(out.weight, head_rng);
  state.head.mapping.push_back(std::move(out));
  return state;
}

void visit_params(Dense& layer, const std::function<void(std::span<double>)>& f) {
  f(flat(layer.weight));
  f(flat(layer.bias));
}

void visit_params(HeadParams& head, const std::function<void(Component, std::span<double>)>& f) {
  for (auto& e : head.embeddings) {
    f(Component::embeddings, flat(e.weight));
    f(Component::embeddings, flat(e.bias));
  }
  f(Component::attention, flat(head.attention.V));
  f(Component::attention, flat(head.attention.w));
  for (auto& m : head.mapping) {
    f(Component::mapping, flat(m.weight));
    f(Component::mapping, flat(m.bias));
  }
}

void visit_params(Backbone& backbone, const std::function<void(std::span<double>)>& f) {
  std::visit(
      [&](auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, MlpBackbone>) {
          for (auto& layer : b.layers) visit_params(layer, f);
        } else {
          for (auto& conv : b.convs) {
            f(flat(conv.kernel));
            f(flat(conv.bias));
          }
          visit_params(b.projection, f);
        }
      },
      backbone);
}

HeadParams zeros_like(const HeadParams& head) {
  HeadParams z = head;
  visit_params(z, [](Component, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  return z;
}

Backbone zeros_like(const Backbone& backbone) {
  Backbone z = backbone;
  visit_params(z, [](std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  return z;
}

Dense zeros_like(const Dense& layer) {
  return Dense{Mat::Zero(layer.weight.rows(), layer.weight.cols()), Vec::Zero(layer.bias.size())};
}

std::size_t count_params(const ModelState& state, Component c) {
  std::size_t n = 0;
  if (c == Component::backbone) {
    auto copy = state.backbone;
    visit_params(copy, [&](std::span<double> s) { n += s.size(); });
    return n;
  }
  auto copy = state.head;
  visit_params(copy, [&](Component comp, std::span<double> s) {
    if (comp == c) n += s.size();
  });
  return n;
}

std::size_t count_trainable(const ModelState& state) {
  std::size_t n = 0;
  for (auto c : {Component::backbone, Component::embeddings, Component::attention,
                 Component::mapping}) {
    if (!state.frozen.is_frozen(c)) n += count_params(state, c);
  }
  return n;
}

// ----------------------------------------------------------------- forward

Vec backbone_forward(const ModelState& state, const Vec& x) {
  return std::visit(
      [&](const auto& b) -> Vec {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, MlpBackbone>) {
          check_dim(x, state.dims.input.size(), "backbone input");
        }
        return b.forward(x);
      },
      state.backbone);
}

HeadTrace head_forward(const HeadParams& head, const Vec& g) {
  HeadTrace t;
  t.g = g;
  const std::size_t n = head.embeddings.size();
  if (n == 0) throw ConfigError("model has no embedding modules");
  check_dim(g, static_cast<std::size_t>(head.embeddings.front().in()), "global feature");

  t.logits.resize(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    t.modules.push_back(head.embeddings[k].apply(g).array().tanh().matrix());
    t.attention_hidden.push_back((head.attention.V * t.modules.back()).array().tanh().matrix());
    t.logits[static_cast<Eigen::Index>(k)] = head.attention.w.dot(t.attention_hidden.back());
  }
  const double mx = t.logits.maxCoeff();
  t.alphas = (t.logits.array() - mx).exp().matrix();
  t.alphas /= t.alphas.sum();

  t.fused = Vec::Zero(g.size());
  for (std::size_t k = 0; k < n; ++k) t.fused += t.alphas[static_cast<Eigen::Index>(k)] * t.modules[k];

  Vec a(2 * g.size());
  a << g, t.fused;
  for (std::size_t i = 0; i < head.mapping.size(); ++i) {
    Vec pre = head.mapping[i].apply(a);
    t.mapping_inputs.push_back(a);
    t.mapping_pre.push_back(pre);
    a = (i + 1 < head.mapping.size()) ? relu(pre) : pre;
  }
  t.y = a;
  return t;
}

FuseResult attention_fuse(const ModelState& state, const Vec& g) {
  check_dim(g, state.dims.u, "global feature");
  auto t = head_forward(state.head, g);
  return {std::move(t.fused), std::move(t.alphas)};
}

Vec map_to_semantic(const ModelState& state, const Vec& g, const Vec& e) {
  check_dim(g, state.dims.u, "global feature");
  check_dim(e, state.dims.u, "fused embedding");
  Vec a(g.size() + e.size());
  a << g, e;
  const auto& layers = state.head.mapping;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Vec pre = layers[i].apply(a);
    a = (i + 1 < layers.size()) ? relu(pre) : pre;
  }
  return a;
}

void head_backward(const HeadParams& head, const HeadTrace& t, const Vec& grad_y,
                   const Vec* grad_fused, std::span<const Vec> grad_modules, HeadParams& grads) {
  Vec delta = grad_y;
  for (std::size_t i = head.mapping.size(); i-- > 0;) {
    grads.mapping[i].weight.noalias() += delta * t.mapping_inputs[i].transpose();
    grads.mapping[i].bias += delta;
    delta = head.mapping[i].weight.transpose() * delta;
    if (i > 0) delta = relu_mask(t.mapping_pre[i - 1], delta);
  }
  const auto u = t.g.size();
  Vec d_fused = delta.tail(u);
  if (grad_fused) d_fused += *grad_fused;

  const std::size_t n = head.embeddings.size();
  std::vector<Vec> d_modules(n);
  Vec d_alpha(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    d_modules[k] = t.alphas[kk] * d_fused;
    if (!grad_modules.empty()) d_modules[k] += grad_modules[k];
    d_alpha[kk] = d_fused.dot(t.modules[k]);
  }
  const double mean = t.alphas.dot(d_alpha);
  const Vec d_logits = t.alphas.cwiseProduct((d_alpha.array() - mean).matrix());

  auto& att = grads.attention;
  for (std::size_t k = 0; k < n; ++k) {
    const double dl = d_logits[static_cast<Eigen::Index>(k)];
    const Vec& h = t.attention_hidden[k];
    att.w += dl * h;
    const Vec d_pre = (dl * head.attention.w).cwiseProduct((1.0 - h.array().square()).matrix());
    att.V.noalias() += d_pre * t.modules[k].transpose();
    d_modules[k].noalias() += head.attention.V.transpose() * d_pre;
  }

  for (std::size_t k = 0; k < n; ++k) {
    const Vec d_pre = d_modules[k].cwiseProduct((1.0 - t.modules[k].array().square()).matrix());
    grads.embeddings[k].weight.noalias() += d_pre * t.g.transpose();
    grads.embeddings[k].bias += d_pre;
  }
}

// -------------------------------------------------------------- classifier

double cosine_distance(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateVectorError("cosine of a zero-norm vector");
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 1.0 - c;
}

Vec cosine_distance_grad(const Vec& s, const Vec& y) {
  const double ns = s.norm(), ny = y.norm();
  if (!(ns > 0.0) || !(ny > 0.0)) throw DegenerateVectorError("cosine of a zero-norm vector");
  const double cos = s.dot(y) / (ns * ny);
  return -(s / (ns * ny) - cos * y / (ny * ny));
}

void ClassifierHead::register_classes(std::span<const std::pair<ClassId, Vec>> classes) {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto& id = classes[i].first;
    if (index_.contains(id)) throw DuplicateError("class '" + id.name() + "' already in head");
    for (std::size_t j = 0; j < i; ++j) {
      if (classes[j].first == id) throw DuplicateError("class '" + id.name() + "' listed twice");
    }
    if (!semantics_.empty() && classes[i].second.size() != semantics_.front().size()) {
      throw ShapeError("semantic vector dimension differs from the head's");
    }
  }
  for (const auto& [id, s] : classes) {
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    semantics_.push_back(s);
  }
}

std::size_t ClassifierHead::index_of(const ClassId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("class '" + id.name() + "' not registered in head");
  return it->second;
}

Vec ClassifierHead::score(const Vec& y) const {
  if (ids_.empty()) throw EmptyInputError("classifier head has no classes");
  if (y.size() != semantics_.front().size()) throw ShapeError("prediction dimension mismatch");
  Vec d(static_cast<Eigen::Index>(ids_.size()));
  for (std::size_t k = 0; k < ids_.size(); ++k) {
    d[static_cast<Eigen::Index>(k)] = cosine_distance(semantics_[k], y);
  }
  return d;
}

void register_session_classes(ClassifierHead& head, const SemanticTable& table,
                              std::span<const ClassId> classes) {
  std::vector<std::pair<ClassId, Vec>> entries;
  entries.reserve(classes.size());
  for (const auto& c : classes) entries.emplace_back(c, table.at(c));
  head.register_classes(entries);
}

std::size_t argmin_index(const Vec& distances, std::span<const std::size_t> allowed) {
  if (distances.size() == 0) throw EmptyInputError("no scores to choose from");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t k) {
    const double d = distances[static_cast<Eigen::Index>(k)];
    if (d < best_d || (d == best_d && k < best)) {
      best_d = d;
      best = k;
    }
  };
  if (allowed.empty()) {
    for (std::size_t k = 0; k < static_cast<std::size_t>(distances.size()); ++k) consider(k);
  } else {
    for (auto k : allowed) {
      if (k >= static_cast<std::size_t>(distances.size())) throw IndexError("candidate out of range");
      consider(k);
    }
  }
  if (best == std::numeric_limits<std::size_t>::max()) best = allowed.empty() ? 0 : allowed.front();
  return best;
}

std::size_t predict_index_from_feature(const ModelState& state, const ClassifierHead& head,
                                       const Vec& g, std::span<const std::size_t> allowed) {
  auto trace = head_forward(state.head, g);
  return argmin_index(head.score(trace.y), allowed);
}

ClassId predict(const ModelState& state, const ClassifierHead& head, const Vec& x) {
  if (head.empty()) throw EmptyInputError("classifier head has no classes");
  const Vec g = backbone_forward(state, x);
  return head.ids()[predict_index_from_feature(state, head, g)];
}

}  // namespace semkd
