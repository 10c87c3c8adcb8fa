#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "semkd/rng.hpp"
#include "semkd/sessions.hpp"
#include "semkd/types.hpp"

namespace semkd {

/// Fully connected layer, `weight` is out x in.
struct Dense {
  Mat weight;
  Vec bias;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
  Vec apply(const Vec& x) const { return weight * x + bias; }
};

Dense make_dense(Eigen::Index in, Eigen::Index out, Rng& rng);

/// ReLU after every layer; the last layer width is u.
struct MlpBackbone {
  std::vector<Dense> layers;

  struct Trace {
    std::vector<Vec> inputs;
    std::vector<Vec> pre;
  };

  Vec forward(const Vec& x, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Vec& grad_out, MlpBackbone& grads) const;
};

/// Three (conv3x3 -> ReLU -> 2x2 average pool) blocks, global average pool
/// and a ReLU projection to u.
struct ConvBackbone {
  struct Conv {
    Mat kernel;  // out_ch x (in_ch * 9)
    Vec bias;
  };
  InputShape input;
  std::vector<Conv> convs;
  Dense projection;

  struct Trace {
    std::vector<Mat> cols;       // im2col per block
    std::vector<Mat> pre;        // out_ch x (h*w) before ReLU
    std::vector<InputShape> in;  // spatial shape entering each block
    Vec pooled;
    Vec proj_pre;
  };

  Vec forward(const Vec& x, Trace* trace = nullptr) const;
  void backward(const Trace& trace, const Vec& grad_out, ConvBackbone& grads) const;
};

using Backbone = std::variant<MlpBackbone, ConvBackbone>;

/// Attention of the fused embedding: logits w^T tanh(V e^k).
struct AttentionParams {
  Mat V;  // L x u
  Vec w;  // L
};

/// Everything downstream of the backbone: N embedding modules (tanh), the
/// attention module and the mapping into semantic space (ReLU hidden layers,
/// linear output).
struct HeadParams {
  std::vector<Dense> embeddings;
  AttentionParams attention;
  std::vector<Dense> mapping;
};

enum class BackboneKind { mlp, cnn };

const char* to_string(BackboneKind k);
BackboneKind backbone_kind_from_string(const std::string& s);

struct ModelConfig {
  BackboneKind backbone = BackboneKind::mlp;
  std::size_t u = 32;
  std::size_t num_superclasses = 3;
  std::size_t attention_hidden = 64;
  std::vector<std::size_t> mapping_hidden = {512, 728};
  std::vector<std::size_t> backbone_hidden = {64};
  std::vector<std::size_t> conv_channels = {8, 16, 32};
};

struct ModelDims {
  InputShape input;
  std::size_t u = 0;
  std::size_t d = 0;
  std::size_t num_superclasses = 0;
  std::size_t attention_hidden = 0;
};

enum class Component { backbone, embeddings, attention, mapping };

struct FrozenFlags {
  bool backbone = false;
  bool embeddings = false;
  bool attention = false;
  bool mapping = false;

  bool is_frozen(Component c) const;
  friend bool operator==(const FrozenFlags&, const FrozenFlags&) = default;
};

struct ModelState {
  ModelConfig config;
  ModelDims dims;
  Backbone backbone;
  HeadParams head;
  FrozenFlags frozen;
};

ModelState init_model(const ModelConfig& config, const InputShape& input, std::size_t semantic_dim,
                      std::uint64_t seed);

/// Visits every parameter tensor as a flat span, in a fixed order.
void visit_params(HeadParams& head, const std::function<void(Component, std::span<double>)>& f);
void visit_params(Backbone& backbone, const std::function<void(std::span<double>)>& f);
void visit_params(Dense& layer, const std::function<void(std::span<double>)>& f);

/// Same structure, all values zero.
HeadParams zeros_like(const HeadParams& head);
Backbone zeros_like(const Backbone& backbone);
Dense zeros_like(const Dense& layer);

std::size_t count_params(const ModelState& state, Component c);
std::size_t count_trainable(const ModelState& state);

Vec backbone_forward(const ModelState& state, const Vec& x);

struct FuseResult {
  Vec fused;
  Vec alphas;
};

/// e^k = E_k(g); alpha = softmax_k(w^T tanh(V e^k)); e = sum_k alpha^k e^k.
FuseResult attention_fuse(const ModelState& state, const Vec& g);

/// y = M([g; e]).
Vec map_to_semantic(const ModelState& state, const Vec& g, const Vec& e);

/// Intermediate values of one forward pass from g to y, kept for backprop.
struct HeadTrace {
  Vec g;
  std::vector<Vec> modules;  // e^k
  std::vector<Vec> attention_hidden;
  Vec logits;
  Vec alphas;
  Vec fused;
  std::vector<Vec> mapping_inputs;
  std::vector<Vec> mapping_pre;
  Vec y;
};

HeadTrace head_forward(const HeadParams& head, const Vec& g);

/// Accumulates parameter gradients into `grads` given dL/dy and any extra
/// gradient flowing directly into e and the e^k (from the attention loss).
void head_backward(const HeadParams& head, const HeadTrace& trace, const Vec& grad_y,
                   const Vec* grad_fused, std::span<const Vec> grad_modules, HeadParams& grads);

/// Cosine distance 1 - cos(a, b); throws DegenerateVectorError on zero norm.
double cosine_distance(const Vec& a, const Vec& b);

/// d(1 - cos(s, y)) / dy.
Vec cosine_distance_grad(const Vec& s, const Vec& y);

/// Semantic vectors of every class seen so far, append-only across sessions.
class ClassifierHead {
 public:
  void register_classes(std::span<const std::pair<ClassId, Vec>> classes);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::vector<ClassId>& ids() const noexcept { return ids_; }
  const std::vector<Vec>& semantics() const noexcept { return semantics_; }
  std::size_t index_of(const ClassId& id) const;
  bool contains(const ClassId& id) const { return index_.contains(id); }

  /// Cosine distance to every registered class, in registration order.
  Vec score(const Vec& y) const;

 private:
  std::vector<ClassId> ids_;
  std::vector<Vec> semantics_;
  std::unordered_map<ClassId, std::size_t> index_;
};

/// Adds the classes' semantic vectors (looked up in `table`) to the head.
void register_session_classes(ClassifierHead& head, const SemanticTable& table,
                              std::span<const ClassId> classes);

/// Index of the smallest entry; lowest index wins ties. `allowed` restricts
/// the candidate set when non-empty.
std::size_t argmin_index(const Vec& distances, std::span<const std::size_t> allowed = {});

/// Full forward pass from g; the argmin over head distances.
std::size_t predict_index_from_feature(const ModelState& state, const ClassifierHead& head,
                                       const Vec& g, std::span<const std::size_t> allowed = {});

ClassId predict(const ModelState& state, const ClassifierHead& head, const Vec& x);

}  // namespace semkd
