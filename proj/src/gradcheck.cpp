#include "mscl/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include "mscl/data.hpp"
#include "mscl/ops.hpp"
#include "mscl/train.hpp"

namespace mscl {

bool GradcheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const auto &e) { return e.pass; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto &e : entries)
    if (!e.pass) out.push_back(e.op);
  return out;
}

std::string GradcheckReport::to_text() const {
  std::ostringstream out;
  for (const auto &e : entries) {
    out << std::left << std::setw(26) << e.op << std::scientific << std::setprecision(3) << e.max_rel_error << "  < "
        << e.tolerance << "  " << (e.pass ? "PASS" : "FAIL") << "\n";
  }
  return out.str();
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto &e : entries)
    ops.push_back({{"op", e.op}, {"max_rel_error", e.max_rel_error}, {"tolerance", e.tolerance}, {"pass", e.pass}});
  return {{"passed", passed()}, {"seconds", seconds}, {"ops", ops}};
}

namespace {

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

void backward_of(const std::function<Tensor()> &f, std::vector<Tensor> &params) {
  for (auto &p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f();
  }
  tape.backward(loss);
}

double numeric_grad(const std::function<Tensor()> &f, Tensor &p, std::size_t i, double step) {
  auto data = p.mutable_data();
  const double orig = data[i];
  data[i] = orig + step;
  const double up = f().item();
  data[i] = orig - step;
  const double down = f().item();
  data[i] = orig;
  return (up - down) / (2.0 * step);
}

double full_check(const std::function<Tensor()> &f, std::vector<Tensor> params, double step) {
  backward_of(f, params);
  double worst = 0.0;
  for (auto &p : params) {
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      worst = std::max(worst, rel_error(analytic, numeric_grad(f, p, i, step)));
    }
  }
  return worst;
}

class Inputs {
 public:
  explicit Inputs(std::uint64_t seed) : rng_(seed) {}

  // Entries bounded away from zero so relu and max kinks stay out of reach
  // of the finite-difference step.
  Tensor operator()(Shape shape) {
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(shape));
    for (auto &x : v) x = sign(rng_) ? u(rng_) : -u(rng_);
    return Tensor(std::move(shape), std::move(v));
  }

  std::mt19937_64 &rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

Tensor dot(const Tensor &x, const Tensor &w) { return sum(mul(x, w)); }

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions &options) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  Inputs R(options.seed);
  const double tol = options.op_tolerance, step = options.step;
  auto check = [&](const std::string &op, const std::function<Tensor()> &f, std::vector<Tensor> params) {
    const double err = full_check(f, std::move(params), step);
    report.entries.push_back({op, err, tol, err < tol});
  };

  auto a = R({3, 4}), b = R({4, 2}), c = R({3, 4});
  auto w32 = R({3, 2}), w33 = R({3, 3}), w34 = R({3, 4}), w44 = R({4, 4}), w4 = R({4});
  check("matmul", [&] { return dot(matmul(a, b), w32); }, {a, b});
  check("matmul_nt", [&] { return dot(matmul_nt(a, c), w33); }, {a, c});
  auto w43 = R({4, 3});
  check("transpose", [&] { return dot(transpose(a), w43); }, {a});
  check("add", [&] { return dot(add(a, c), w34); }, {a, c});
  check("sub", [&] { return dot(sub(a, c), w34); }, {a, c});
  check("mul", [&] { return dot(mul(a, c), w34); }, {a, c});
  check("scale", [&] { return dot(scale(a, -1.7), w34); }, {a});
  auto bias = R({4});
  check("add_row", [&] { return dot(add_row(a, bias), w34); }, {a, bias});
  check("relu", [&] { return dot(relu(a), w34); }, {a});
  check("softmax_rows", [&] { return dot(softmax_rows(a), w34); }, {a});
  auto sq = R({4, 4});
  check("causal_softmax_rows", [&] { return dot(causal_softmax_rows(sq), w44); }, {sq});
  auto gain = R({4}), shift = R({4});
  check("layer_norm", [&] { return dot(layer_norm(a, gain, shift), w34); }, {a, gain, shift});
  std::vector<Tensor> views{R({5}), R({5}), R({5})};
  auto w5 = R({5});
  check("max_pool_rows", [&] { return dot(max_pool_rows(views), w5); }, views);
  auto probs = softmax_rows(R({3, 4}));
  auto onehot = Tensor::matrix(3, 4, {0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1});
  check("cross_entropy_rows", [&] { return cross_entropy_rows(probs, onehot); }, {probs});
  auto u = R({6}), v = R({6});
  check("cosine_sim", [&] { return cosine_sim(u, v); }, {u, v});
  auto za = R({4, 6}), zb = R({4, 6});
  check("cosine_sim_matrix", [&] { return dot(cosine_sim_matrix(za, zb), w44); }, {za, zb});
  auto s = R({4, 4});
  auto weights = Tensor::matrix(4, 4, {1, 2, 0, 1, 1, 1, 2, 2, 0.5, 0, 1, 0, 2, 2, 2, 1});
  check("weighted_logsumexp_rows", [&] { return dot(weighted_logsumexp_rows(s, weights), w4); }, {s});
  check("diagonal", [&] { return dot(diagonal(s), w4); }, {s});
  check("sum", [&] { return sum(a); }, {a});
  check("mean_rows", [&] { return dot(mean_rows(a), w4); }, {a});
  auto w26 = R({2, 6});
  check("reshape", [&] { return dot(reshape(a, {2, 6}), w26); }, {a});
  check("slice_cols", [&] { return dot(slice_cols(a, 1, 2), w32); }, {a});
  auto d3 = R({3, 3}), w37 = R({3, 7});
  check("concat_cols", [&] { return dot(concat_cols(std::vector<Tensor>{a, d3}), w37); }, {a, d3});
  auto w24 = R({2, 4});
  check("slice_rows", [&] { return dot(slice_rows(a, 1, 2), w24); }, {a});
  auto e24 = R({2, 4}), w54 = R({5, 4});
  check("concat_rows", [&] { return dot(concat_rows(std::vector<Tensor>{a, e24}), w54); }, {a, e24});
  const std::vector<std::size_t> ids{2, 0, 2};
  check("gather_rows", [&] { return dot(gather_rows(a, ids), w34); }, {a});
  auto w35 = R({3, 5});
  check("stack_rows", [&] { return dot(stack_rows(views), w35); }, views);
  check("select_row", [&] { return dot(select_row(a, 1), w4); }, {a});

  if (options.end_to_end) {
    ModelConfig mc;
    mc.n_topics = 3;
    mc.d = 8;
    mc.c = 6;
    mc.vocab_size = 12;
    mc.decoder_layers = 2;
    mc.heads = 2;
    mc.ff_dim = 16;
    mc.max_len = 10;
    mc.patch = 4;
    mc.image_size = 8;
    MsclModel model(mc, options.seed);
    ContrastiveHead head(mc.d, 5, options.seed + 1);
    std::uniform_real_distribution<double> pix(0.0, 1.0);
    auto image = [&] {
      GrayImage img = GrayImage::filled(8, 8, 0.0);
      for (auto &p : img.pixels) p = pix(R.rng());
      return img;
    };
    std::vector<Example> ex(2);
    ex[0] = {"a", {image(), image()}, {4, 5}, {6, 7, 8}, {0, 1, 1}, {true, false, false}, ""};
    ex[1] = {"b", {image()}, {9}, {10, 11}, {1, 0, 3}, {false, true, false}, ""};
    std::vector<const Example *> batch{&ex[0], &ex[1]};
    LossOptions lo;
    auto f = [&] { return forward_losses(model, head, batch, lo).l_total; };

    std::vector<Tensor> params = model.parameters();
    for (auto &t : head.parameters()) params.push_back(t);
    backward_of(f, params);
    std::size_t total = 0;
    for (auto &p : params) total += p.numel();
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < options.end_to_end_samples; ++k) {
      std::size_t flat = pick(R.rng()), which = 0;
      while (flat >= params[which].numel()) flat -= params[which++].numel();
      const double analytic = params[which].has_grad() ? params[which].grad()[flat] : 0.0;
      worst = std::max(worst, rel_error(analytic, numeric_grad(f, params[which], flat, step)));
    }
    report.entries.push_back({"end_to_end_L_total", worst, options.end_to_end_tolerance,
                              worst < options.end_to_end_tolerance});
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mscl
