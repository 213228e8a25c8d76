#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "mscl/data.hpp"
#include "mscl/error.hpp"
#include "mscl/model.hpp"
#include "mscl/ops.hpp"
#include "mscl/train.hpp"

using namespace mscl;
using namespace mscl::testing;

namespace {

ModelConfig small_config() {
  ModelConfig m;
  m.n_topics = 3;
  m.n_states = 4;
  m.d = 8;
  m.c = 6;
  m.vocab_size = 12;
  m.decoder_layers = 2;
  m.encoder_layers = 1;
  m.heads = 2;
  m.ff_dim = 16;
  m.max_len = 10;
  m.patch = 4;
  m.image_size = 8;
  return m;
}

GrayImage random_image(std::size_t size, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GrayImage img = GrayImage::filled(size, size, 0.0);
  for (auto &p : img.pixels) p = u(rng);
  return img;
}

void zero(Tensor t) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0); }

bool equal(const Tensor &a, const Tensor &b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

double max_abs_diff(const Tensor &a, const Tensor &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void check_rows_sum_to_one(const Tensor &p) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) s += p.at(r, c);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

}  // namespace

TEST_CASE("config validation") {
  auto m = small_config();
  CHECK_NOTHROW(m.validate());
  auto bad = m;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = m;
  bad.n_states = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = m;
  bad.d = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(ModelConfig::from_json(m.to_json()) == m);
}

TEST_CASE("parameter count") {
  MsclModel model(small_config(), 1);
  // Hand count for the small configuration.
  CHECK(model.parameter_count() == 3010);
  CHECK(expected_parameter_count(small_config()) == 3010);
  for (std::size_t d : {8, 16}) {
    for (std::size_t layers : {1, 3}) {
      auto m = small_config();
      m.d = d;
      m.decoder_layers = layers;
      m.n_topics = layers + 1;
      CHECK(MsclModel(m, 2).parameter_count() == expected_parameter_count(m));
    }
  }
  std::set<std::string> names;
  for (const auto &[name, t] : model.named_parameters()) names.insert(name);
  CHECK(names.size() == model.named_parameters().size());
}

TEST_CASE("extract_view") {
  std::mt19937_64 rng(3);
  MsclModel model(small_config(), 1);
  auto &ex = model.extractor();
  GrayImage a = random_image(8, rng), b = random_image(8, rng);
  Tensor fa = model.extract_view(a);
  CHECK(fa.numel() == 6);
  CHECK(equal(fa, model.extract_view(a)));
  CHECK(max_abs_diff(fa, model.extract_view(b)) > 1e-6);

  zero(ex.patch_proj.b);
  zero(ex.patch_pos);
  Tensor z = model.extract_view(GrayImage::filled(8, 8, 0.0));
  for (double v : z.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(model.extract_view(GrayImage::filled(6, 8, 0.0)), ShapeError);
  CHECK_THROWS_AS(model.extract_view(GrayImage::filled(16, 16, 0.0)), ShapeError);
}

TEST_CASE("pool_views") {
  std::mt19937_64 rng(4);
  MsclModel model(small_config(), 1);
  std::vector<Tensor> feats;
  for (int i = 0; i < 3; ++i) feats.push_back(model.extract_view(random_image(8, rng)));
  Tensor pooled = model.pool_views(feats);
  std::vector<Tensor> rev(feats.rbegin(), feats.rend());
  CHECK(equal(pooled, model.pool_views(rev)));
  for (std::size_t k = 0; k < 6; ++k) {
    double m = -1e300;
    for (const auto &f : feats) m = std::max(m, f[k]);
    CHECK(pooled[k] == m);
  }
  CHECK_THROWS_AS(model.pool_views(std::vector<Tensor>{}), EmptyInputError);
}

TEST_CASE("project_diseases") {
  std::mt19937_64 rng(5);
  auto cfg = small_config();
  MsclModel model(cfg, 1);
  auto &ex = model.extractor();
  Tensor x = random_tensor({6}, rng);

  zero(ex.disease_a);
  auto b = ex.disease_b.mutable_data();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<double>(i % 5);
  Tensor rows = model.project_diseases(x);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < 8; ++c) CHECK(rows.at(j, c) == b[j * 8 + c]);

  // Random A, b against a per-row loop.
  auto a = ex.disease_a.mutable_data();
  for (auto &v : a) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  for (auto &v : b) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  rows = model.project_diseases(x);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t c = 0; c < 8; ++c) {
      double s = b[j * 8 + c];
      for (std::size_t i = 0; i < 6; ++i) s += a[i * 24 + j * 8 + c] * x[i];
      CHECK(rows.at(j, c) == doctest::Approx(s).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(model.project_diseases(random_tensor({5}, rng)), DimensionError);
}

TEST_CASE("project_diseases identity when c equals d") {
  std::mt19937_64 rng(6);
  auto cfg = small_config();
  cfg.c = cfg.d;
  MsclModel model(cfg, 1);
  auto &ex = model.extractor();
  auto a = ex.disease_a.mutable_data();
  std::fill(a.begin(), a.end(), 0.0);
  for (std::size_t j = 0; j < cfg.n_topics; ++j)
    for (std::size_t i = 0; i < cfg.d; ++i) a[i * cfg.n_topics * cfg.d + j * cfg.d + i] = 1.0;
  Tensor x = random_tensor({cfg.d}, rng);
  Tensor rows = model.project_diseases(x);
  for (std::size_t j = 0; j < cfg.n_topics; ++j)
    for (std::size_t i = 0; i < cfg.d; ++i) CHECK(rows.at(j, i) == x[i]);
}

TEST_CASE("encode_text") {
  MsclModel model(small_config(), 1);
  std::vector<std::size_t> tokens{4, 5, 6, 7, 4};
  Tensor h = model.encode_text(tokens);
  CHECK(h.shape() == Shape{5, 8});
  CHECK(equal(h, model.encode_text(tokens)));

  Tensor empty = model.encode_text(std::vector<std::size_t>{});
  CHECK(equal(empty, model.encode_text(std::vector<std::size_t>{Vocabulary::kPad})));

  std::vector<std::size_t> longer(15, 5);
  CHECK(model.encode_text(longer).rows() == 10);

  auto cfg = small_config();
  cfg.text_positions = false;
  MsclModel plain(cfg, 1);
  std::vector<std::size_t> perm{2, 0, 4, 1, 3};
  std::vector<std::size_t> shuffled;
  for (auto p : perm) shuffled.push_back(tokens[p]);
  Tensor base = plain.encode_text(tokens), moved = plain.encode_text(shuffled);
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(moved.at(r, c) == doctest::Approx(base.at(perm[r], c)).epsilon(1e-12));
}

TEST_CASE("batched encoding matches single sequences") {
  MsclModel model(small_config(), 1);
  std::vector<std::vector<std::size_t>> seqs{{4, 5}, {6, 7, 8, 9}, {}};
  std::vector<std::size_t> off;
  Tensor all = model.encode_text_batch(seqs, off);
  CHECK(off == std::vector<std::size_t>{0, 2, 6, 7});
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    Tensor one = model.encode_text(seqs[s]);
    CHECK(max_abs_diff(one, slice_rows(all, off[s], off[s + 1] - off[s])) < 1e-12);
  }
}

TEST_CASE("topic_attention") {
  std::mt19937_64 rng(7);
  Tensor q = random_tensor({3, 4}, rng);
  std::vector<double> row{0.3, -1.0, 2.0, 0.5}, hv;
  for (int i = 0; i < 5; ++i) hv.insert(hv.end(), row.begin(), row.end());
  Tensor same = topic_attention(q, Tensor::matrix(5, 4, hv));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(same.at(r, c) == doctest::Approx(row[c]).epsilon(1e-12));

  Tensor d = topic_attention(Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(std::abs(d.at(0, 0) - 0.731059) < 1e-6);
  CHECK(std::abs(d.at(0, 1) - 0.268941) < 1e-6);

  Tensor h = random_tensor({5, 4}, rng);
  std::vector<std::size_t> perm{3, 1, 4, 0, 2};
  Tensor hp = gather_rows(h, perm);
  CHECK(max_abs_diff(topic_attention(q, h), topic_attention(q, hp)) < 1e-12);
  CHECK_THROWS_AS(topic_attention(q, Tensor::zeros({0, 4})), EmptyInputError);
}

TEST_CASE("fuse") {
  std::mt19937_64 rng(8);
  LayerNormParams ln{Tensor::full({4}, 1.0), Tensor::zeros({4})};
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
  Tensor zero_sum = fuse(a, scale(a, -1.0), ln);
  for (double v : zero_sum.data()) CHECK(v == 0.0);
  CHECK(equal(fuse(a, b, ln), fuse(b, a, ln)));

  LayerNormParams rnd{random_tensor({4}, rng), random_tensor({4}, rng)};
  Tensor f = fuse(a, b, rnd);
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 4; ++c) mean += (a.at(r, c) + b.at(r, c)) / 4.0;
    for (std::size_t c = 0; c < 4; ++c) var += std::pow(a.at(r, c) + b.at(r, c) - mean, 2) / 4.0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double expect = (a.at(r, c) + b.at(r, c) - mean) / std::sqrt(var + 1e-5) * rnd.gain[c] + rnd.bias[c];
      CHECK(f.at(r, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(fuse(a, random_tensor({2, 4}, rng), ln), DimensionError);
}

TEST_CASE("classify_states") {
  std::mt19937_64 rng(9);
  Tensor d_it = random_tensor({3, 5}, rng);
  Tensor uniform = classify_states(d_it, Tensor::zeros({4, 5}));
  for (double v : uniform.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  // Logits (1, 0) from a 1-wide embedding.
  Tensor p = classify_states(Tensor::matrix(1, 1, {1.0}), Tensor::matrix(2, 1, {1.0, 0.0}));
  CHECK(std::abs(p.at(0, 0) - 0.731059) < 1e-6);
  CHECK(std::abs(p.at(0, 1) - 0.268941) < 1e-6);
  check_rows_sum_to_one(classify_states(d_it, random_tensor({4, 5}, rng, -5, 5)));
}

TEST_CASE("decode_hidden causality and conditioning") {
  std::mt19937_64 rng(10);
  MsclModel model(small_config(), 1);
  Tensor d_it = random_tensor({3, 8}, rng);
  std::vector<std::size_t> prefix{Vocabulary::kBos, 4, 5, 6, 7, 8};
  Tensor h = model.decode_hidden(prefix, d_it);
  CHECK(h.shape() == Shape{6, 8});
  for (std::size_t j = 1; j < prefix.size(); ++j) {
    auto changed = prefix;
    changed[j] = 11;
    Tensor h2 = model.decode_hidden(changed, d_it);
    for (std::size_t r = 0; r < j; ++r)
      for (std::size_t c = 0; c < 8; ++c) CHECK(h2.at(r, c) == h.at(r, c));
    CHECK(max_abs_diff(slice_rows(h, j, 1), slice_rows(h2, j, 1)) > 0.0);
  }
  Tensor h3 = model.decode_hidden(prefix, random_tensor({3, 8}, rng));
  for (std::size_t r = 0; r < prefix.size(); ++r) CHECK(max_abs_diff(slice_rows(h, r, 1), slice_rows(h3, r, 1)) > 1e-9);

  std::vector<std::size_t> too_long(11, 4);
  too_long[0] = Vocabulary::kBos;
  CHECK_THROWS_AS(model.decode_hidden(too_long, d_it), LengthError);
  CHECK_THROWS_AS(model.decode_hidden(std::vector<std::size_t>{4, 5}, d_it), InputError);
  CHECK_THROWS_AS(model.decode_hidden(prefix, random_tensor({2, 8}, rng)), DimensionError);
}

TEST_CASE("batched decoding matches single prefixes") {
  std::mt19937_64 rng(11);
  MsclModel model(small_config(), 1);
  std::vector<std::vector<std::size_t>> prefixes{{1, 4, 5}, {1}, {1, 6, 7, 8}};
  std::vector<Tensor> mems{random_tensor({3, 8}, rng), random_tensor({3, 8}, rng), random_tensor({3, 8}, rng)};
  Tensor all = model.decode_hidden_batch(prefixes, mems);
  std::size_t row = 0;
  for (std::size_t s = 0; s < prefixes.size(); ++s) {
    Tensor one = model.decode_hidden(prefixes[s], mems[s]);
    CHECK(max_abs_diff(one, slice_rows(all, row, prefixes[s].size())) < 1e-12);
    row += prefixes[s].size();
  }
}

TEST_CASE("word distribution and weighted word embedding") {
  std::mt19937_64 rng(12);
  Tensor w = random_tensor({7, 4}, rng);
  Tensor uniform = word_distribution(Tensor::zeros({3, 4}), w);
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  Tensor h = random_tensor({5, 4}, rng);
  Tensor p = word_distribution(h, w);
  check_rows_sum_to_one(p);
  Tensor logits = matmul_nt(h, w);
  for (std::size_t r = 0; r < 5; ++r) {
    std::size_t ap = 0, al = 0;
    for (std::size_t c = 1; c < 7; ++c) {
      if (p.at(r, c) > p.at(r, ap)) ap = c;
      if (logits.at(r, c) > logits.at(r, al)) al = c;
    }
    CHECK(ap == al);
  }

  std::vector<double> onehot(7, 0.0);
  onehot[3] = 1.0;
  Tensor e = weighted_word_embedding(Tensor::matrix(1, 7, onehot), w);
  for (std::size_t c = 0; c < 4; ++c) CHECK(e.at(0, c) == w.at(3, c));
  Tensor mean = weighted_word_embedding(Tensor::full({1, 7}, 1.0 / 7.0), w);
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 7; ++r) s += w.at(r, c) / 7.0;
    CHECK(mean.at(0, c) == doctest::Approx(s).epsilon(1e-12));
  }
  Tensor pr = random_tensor({2, 7}, rng);
  Tensor got = weighted_word_embedding(pr, w);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += pr.at(r, k) * w.at(k, c);
      CHECK(got.at(r, c) == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("report generation") {
  std::mt19937_64 rng(13);
  MsclModel model(small_config(), 1);
  std::vector<GrayImage> views{random_image(8, rng), random_image(8, rng)};
  std::vector<std::size_t> ind{4, 5, 6};
  auto greedy = model.generate_report(views, ind);
  CHECK(greedy == model.generate_report(views, ind));
  DecodeOptions beam1{DecodeStrategy::beam, 1};
  CHECK(model.generate_report(views, ind, beam1) == greedy);
  for (std::size_t width : {2, 4, 8}) {
    auto out = model.generate_report(views, ind, {DecodeStrategy::beam, width});
    CHECK((out.size() == 10 || (!out.empty() && out.back() == Vocabulary::kEos)));
  }
  CHECK((greedy.size() == 10 || greedy.back() == Vocabulary::kEos));
  CHECK_THROWS_AS(model.generate_report(views, ind, {DecodeStrategy::beam, 9}), ParameterError);
  CHECK_THROWS_AS(model.generate_report(views, ind, {DecodeStrategy::beam, 0}), ParameterError);

  // EOS made overwhelmingly likely terminates immediately.
  auto w = model.decoder().embed.mutable_data();
  Tensor d_it = model.disease_embeddings(views, ind);
  auto &final_ln = model.decoder().final_ln;
  zero(final_ln.gain);
  auto bias = final_ln.bias.mutable_data();
  std::fill(bias.begin(), bias.end(), 1.0);
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t c = 0; c < 8; ++c) w[Vocabulary::kEos * 8 + c] = 1.0;
  CHECK(model.generate_from(d_it) == std::vector<std::size_t>{Vocabulary::kEos});
}

namespace {

std::vector<Example> gradcheck_examples(std::mt19937_64 &rng) {
  std::vector<Example> out(2);
  out[0] = {"a", {random_image(8, rng), random_image(8, rng)}, {4, 5}, {6, 7, 8}, {0, 1, 1}, {true, false, false}, ""};
  out[1] = {"b", {random_image(8, rng)}, {9}, {10, 11}, {1, 0, 3}, {false, true, false}, ""};
  return out;
}

}  // namespace

TEST_CASE("end-to-end gradient check on sampled parameters") {
  std::mt19937_64 rng(14);
  MsclModel model(small_config(), 21);
  ContrastiveHead head(8, 5, 22);
  auto examples = gradcheck_examples(rng);
  std::vector<const Example *> batch{&examples[0], &examples[1]};
  LossOptions opts;
  auto loss = [&] { return forward_losses(model, head, batch, opts).l_total; };

  std::vector<Tensor> params = model.parameters();
  for (auto &t : head.parameters()) params.push_back(t);
  for (auto &p : params) p.clear_grad();
  {
    Tape tape;
    Tensor l;
    {
      TapeScope scope(tape);
      l = loss();
    }
    tape.backward(l);
  }
  std::size_t total = 0;
  for (auto &p : params) total += p.numel();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double worst = 0.0;
  for (int s = 0; s < 50; ++s) {
    std::size_t flat = pick(rng), which = 0;
    while (flat >= params[which].numel()) flat -= params[which++].numel();
    Tensor &p = params[which];
    const double analytic = p.has_grad() ? p.grad()[flat] : 0.0;
    auto data = p.mutable_data();
    const double orig = data[flat];
    data[flat] = orig + 1e-5;
    const double up = loss().item();
    data[flat] = orig - 1e-5;
    const double down = loss().item();
    data[flat] = orig;
    worst = std::max(worst, relative_error(analytic, (up - down) / 2e-5));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("loss mixing routes gradients") {
  std::mt19937_64 rng(15);
  auto examples = gradcheck_examples(rng);
  std::vector<const Example *> batch{&examples[0], &examples[1]};
  auto grads_for = [&](double lambda, MsclModel &model, ContrastiveHead &head) {
    LossOptions opts;
    opts.lambda = lambda;
    Tape tape;
    LossBundle l;
    {
      TapeScope scope(tape);
      l = forward_losses(model, head, batch, opts);
    }
    tape.backward(l.l_total);
    return l;
  };
  auto all_zero = [](const Tensor &t) {
    if (!t.has_grad()) return true;
    return std::all_of(t.grad().begin(), t.grad().end(), [](double g) { return g == 0.0; });
  };
  {
    MsclModel model(small_config(), 3);
    ContrastiveHead head(8, 5, 4);
    grads_for(1.0, model, head);
    for (const auto &[name, t] : head.named_parameters()) CHECK_MESSAGE(all_zero(t), name);
    CHECK_FALSE(all_zero(model.state_embedding()));
  }
  {
    MsclModel model(small_config(), 3);
    ContrastiveHead head(8, 5, 4);
    grads_for(0.0, model, head);
    for (const auto &[name, t] : model.named_parameters()) {
      if (name.rfind("decoder.", 0) == 0 || name == "classifier.states") CHECK_MESSAGE(all_zero(t), name);
    }
    bool head_moves = false;
    for (const auto &[name, t] : head.named_parameters()) head_moves |= !all_zero(t);
    CHECK(head_moves);
  }
}
