#include "sparsernn/diagnostics.hpp"

#include <cstring>

namespace sparsernn {

namespace {

using T = Tensor<double>;
using V = ad::Var<double>;
using Fn = std::function<V(std::span<const V>)>;

T uniform(Index rows, Index cols, double lo, double hi, RngStream& rng) {
  T t(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Entries bounded away from zero, where |θ| in log α has its kink.
T signed_away_from_zero(Index rows, Index cols, RngStream& rng) {
  T t = uniform(rows, cols, 0.2, 1.0, rng);
  for (Index i = 0; i < t.size(); ++i)
    if (rng.uniform() < 0.5) t.data()[i] = -t.data()[i];
  return t;
}

// Reduces an output to a scalar with fixed random weights, so every output
// entry contributes a distinct gradient.
V project(const V& out, std::uint64_t tag) {
  RngStream rng = RngStream(tag).derive("projection");
  return ad::sum(ad::mul(out, ad::constant<double>(rng.normal_tensor<double>(out.rows(), out.cols()))));
}

Model<double> randomized_model(const ModelConfig& cfg, RngStream& rng) {
  auto m = Model<double>::create(cfg, 3);
  for (auto* p : m.gaussian_params()) {
    p->theta = signed_away_from_zero(p->rows(), p->cols(), rng);
    p->log_sigma = uniform(p->rows(), p->cols(), -2.0, -0.5, rng);
  }
  for (auto& [name, b] : m.biases()) *b = uniform(b->rows(), b->cols(), -0.5, 0.5, rng);
  return m;
}

Batch classification_batch() {
  std::vector<LabeledSequence> seqs{{0, {1, 3, 4, 5}}, {1, {1, 2}}, {1, {1, 5, 4, 3, 2}}};
  return classification_batches(seqs, 3).front();
}

Batch lm_batch(Index vocab, RngStream& rng) {
  std::vector<Index> ids(25);
  for (auto& id : ids) id = static_cast<Index>(rng.below(static_cast<std::uint64_t>(vocab)));
  return char_lm_batches(ids, 4, 3).front();
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, double step, double tolerance) {
  std::vector<GradCheckCase> out;
  RngStream rng = RngStream(seed).derive("gradcheck");
  auto run = [&](const std::string& name, const Fn& fn, std::vector<T> point) {
    out.push_back({name, grad_check<double>(fn, std::move(point), step, tolerance)});
  };
  const Index h = 2;

  {
    const std::vector<Index> tokens{0, 3, 3, 1};
    run("embedding lookup with z",
        [tokens](std::span<const V> in) { return project(embed_step(in[0], std::span<const Index>(tokens), &in[1]), 1); },
        {uniform(5, 3, -1, 1, rng), uniform(4, 5, 0.5, 1.5, rng)});
  }
  {
    const Index b = 3, d = 3, steps = 4;
    auto lstm_case = [&](const std::string& name, std::vector<Index> lengths) {
      std::vector<T> point{uniform(d, 4 * h, -1, 1, rng), uniform(h, 4 * h, -1, 1, rng), uniform(1, 4 * h, -0.5, 0.5, rng),
                           uniform(b, h, -0.5, 0.5, rng), uniform(b, h, -0.5, 0.5, rng)};
      for (Index t = 0; t < steps; ++t) point.push_back(uniform(b, d, -1, 1, rng));
      run(name,
          [lengths](std::span<const V> in) {
            auto res = lstm_forward(in[0], in[1], in[2], in.subspan(5), in[3], in[4], std::span<const Index>(lengths));
            V total = project(res.c, 2);
            for (std::size_t t = 0; t < res.states.size(); ++t) total = ad::add(total, project(res.states[t], 10 + t));
            return total;
          },
          std::move(point));
    };
    lstm_case("lstm", {});
    lstm_case("lstm with padding", {4, 2, 1});
  }
  {
    const GaussianParam<double> shape = GaussianParam<double>::with_log_sigma("w", T::Zero(3, 4), -3);
    run("dense",
        [shape](std::span<const V> in) {
          VariationalDense<double> d(shape, T::Zero(1, 4), "b", DenseMode::weight_sample, LayerPosition::hidden);
          return project(dense_forward(d, in[1], in[2], in[0]), 3);
        },
        {uniform(5, 3, -1, 1, rng), uniform(3, 4, -1, 1, rng), uniform(1, 4, -1, 1, rng)});
    run("dense lrt head",
        [shape](std::span<const V> in) {
          VariationalDense<double> d(shape, T::Zero(1, 4), "b", DenseMode::lrt, LayerPosition::output_head);
          RngStream noise(99);
          return project(dense_forward_lrt(d, in[1], in[2], in[3], in[0], noise), 4);
        },
        {uniform(5, 3, -1, 1, rng), uniform(3, 4, -1, 1, rng), uniform(3, 4, -2, 0, rng), uniform(1, 4, -1, 1, rng)});
  }
  run("kl term", [](std::span<const V> in) { return ad::kl_term(in[0], in[1]); },
      {signed_away_from_zero(3, 4, rng), uniform(3, 4, -3, 1, rng)});
  {
    const T eps = rng.normal_tensor<double>(3, 4);
    run("reparametrisation", [eps](std::span<const V> in) { return project(ad::reparametrize(in[0], in[1], eps), 5); },
        {uniform(3, 4, -1, 1, rng), uniform(3, 4, -2, 0, rng)});
  }
  {
    const std::vector<Index> targets{2, 0, 1, 2};
    run("softmax cross-entropy",
        [targets](std::span<const V> in) { return ad::softmax_cross_entropy(in[0], std::span<const Index>(targets)); },
        {uniform(4, 3, -2, 2, rng)});
  }

  struct ElboCase {
    std::string name;
    ModelConfig cfg;
  };
  const std::vector<ElboCase> elbo_cases{
      {"elbo char lm sparsevd", {Task::char_lm, Mode::sparsevd, 5, 0, h, 5, false, -3}},
      {"elbo char lm sparsevd_voc", {Task::char_lm, Mode::sparsevd_voc, 5, 0, h, 5, false, -3}},
      {"elbo word lm sparsevd lrt head", {Task::word_lm, Mode::sparsevd, 5, 3, h, 5, true, -3}},
      {"elbo classify baseline", {Task::classify, Mode::baseline, 6, 3, h, 2, false, -3}},
      {"elbo classify sparsevd", {Task::classify, Mode::sparsevd, 6, 3, h, 2, false, -3}},
      {"elbo classify sparsevd_voc", {Task::classify, Mode::sparsevd_voc, 6, 3, h, 2, false, -3}},
  };
  for (const auto& c : elbo_cases) {
    const Model<double> model = randomized_model(c.cfg, rng);
    const Batch batch = c.cfg.task == Task::classify ? classification_batch() : lm_batch(c.cfg.vocab_size, rng);
    out.push_back({c.name, model_grad_check(model, batch, 2 * batch.batch, seed + 17, step, tolerance)});
  }
  return out;
}

namespace {

bool same_bits(const T& a, const T& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

void check_one(const ModelConfig& cfg, const Batch& batch, std::uint64_t seed, TiedSamplingResult& r) {
  const auto model = Model<double>::create(cfg, seed);
  auto ctx = ForwardContext<double>::training(RngStream(seed).derive("tied"), true);
  LstmTrace<double> trace;
  forward(model, batch, ctx, nullptr, nullptr, &trace);
  const auto& draws = ctx.draw_counts();
  for (const auto* p : model.gaussian_params()) {
    auto it = draws.find(p->name);
    const int n = it == draws.end() ? 0 : it->second;
    if (model.vocab && p == &model.vocab->z) {
      if (n != batch.batch) {
        r.z_per_object = false;
        r.detail += p->name + " drawn " + std::to_string(n) + " times; ";
      }
    } else if (n != 1) {
      r.one_draw_per_param = false;
      r.detail += p->name + " drawn " + std::to_string(n) + " times; ";
    }
  }
  auto all_same = [&](const std::vector<const void*>& nodes) {
    if (static_cast<Index>(nodes.size()) != batch.steps) return false;
    for (const auto* n : nodes)
      if (n != nodes.front()) return false;
    return true;
  };
  if (!all_same(trace.w_h_nodes) || !all_same(trace.w_x_nodes)) {
    r.same_node_every_step = false;
    r.detail += "weight node changed across timesteps; ";
  }
  if (!same_bits(trace.w_h_first, trace.w_h_last)) {
    r.first_last_identical = false;
    r.detail += "w_h bits differ between t=0 and t=T-1; ";
  }
}

}  // namespace

TiedSamplingResult check_tied_sampling(std::uint64_t seed, Index batch, Index steps) {
  TiedSamplingResult r;
  r.one_draw_per_param = r.z_per_object = r.same_node_every_step = r.first_last_identical = true;
  RngStream rng = RngStream(seed).derive("tokens");

  // Classification with an embedding layer.
  std::vector<LabeledSequence> seqs;
  for (Index i = 0; i < batch; ++i) {
    LabeledSequence s;
    s.label = i % 2;
    s.tokens.push_back(Vocabulary::kStart);
    for (Index t = 1; t < steps; ++t) s.tokens.push_back(3 + static_cast<Index>(rng.below(9)));
    seqs.push_back(std::move(s));
  }
  check_one({Task::classify, Mode::sparsevd_voc, 12, 3, 2, 2, false, -3}, classification_batches(seqs, batch).front(),
            seed, r);

  // Character LM: tokens index W^x directly.
  std::vector<Index> ids(static_cast<std::size_t>(batch * steps + 1));
  for (auto& id : ids) id = static_cast<Index>(rng.below(12));
  check_one({Task::char_lm, Mode::sparsevd_voc, 12, 0, 2, 12, false, -3}, char_lm_batches(ids, steps, batch).front(), seed,
            r);
  return r;
}

}  // namespace sparsernn
