#include "mscl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mscl/error.hpp"
#include "mscl/ops.hpp"

namespace mscl {

std::vector<Example> make_examples(std::span<const Study> studies, const Vocabulary &vocab,
                                   const ExampleOptions &options) {
  if (options.max_len < 1) throw ParameterError("max_len must be positive");
  std::vector<Example> out;
  out.reserve(studies.size());
  for (const auto &st : studies) {
    if (st.views.empty()) throw InputError("study " + st.id + " has no decoded views");
    Example ex;
    ex.id = st.id;
    const std::size_t m = options.single_view ? 1 : st.views.size();
    for (std::size_t v = 0; v < m; ++v) {
      if (options.backend) {
        ex.views.push_back(
            segment_image(st.views[v], *options.backend, options.segmenter, st.id + "_" + std::to_string(v)));
      } else {
        ex.views.push_back(st.views[v]);
      }
    }
    ex.indication = vocab.encode(tokenize(st.indication));
    const auto report_tokens = tokenize(st.report);
    ex.report = vocab.encode(report_tokens);
    if (ex.report.size() + 1 > options.max_len) ex.report.resize(options.max_len - 1);
    ex.reference = detokenize(report_tokens);
    for (auto s : st.topic_states) {
      const auto idx = static_cast<std::size_t>(s);
      if (idx >= options.n_states) {
        throw LabelError("study " + st.id + ": state '" + std::string(to_string(s)) + "' outside k=" +
                         std::to_string(options.n_states));
      }
      ex.states.push_back(idx);
      ex.signature.push_back(is_abnormal(s));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

LossBundle forward_losses(const MsclModel &model, const ContrastiveHead &head, std::span<const Example *const> batch,
                          const LossOptions &options) {
  if (batch.empty()) throw EmptyInputError("forward_losses: empty batch");
  const auto &cfg = model.config();
  const std::size_t b = batch.size();

  std::vector<std::vector<std::size_t>> indications, reports, prefixes;
  std::vector<std::size_t> states, targets;
  std::vector<TopicSignature> labels;
  for (const auto *ex : batch) {
    if (ex->states.size() != cfg.n_topics) {
      throw DimensionError("example " + ex->id + " has " + std::to_string(ex->states.size()) + " topic states, model expects " +
                           std::to_string(cfg.n_topics));
    }
    indications.push_back(ex->indication);
    reports.push_back(ex->report);
    std::vector<std::size_t> prefix{Vocabulary::kBos};
    prefix.insert(prefix.end(), ex->report.begin(), ex->report.end());
    prefixes.push_back(std::move(prefix));
    targets.insert(targets.end(), ex->report.begin(), ex->report.end());
    targets.push_back(Vocabulary::kEos);
    states.insert(states.end(), ex->states.begin(), ex->states.end());
    labels.push_back(ex->signature);
  }

  // Non-finite activations are reported against the loss term being built.
  auto term = [](const char *name, auto &&fn) {
    try {
      return fn();
    } catch (const InvalidValueError &e) {
      throw NumericError(std::string("non-finite values while computing ") + name + ": " + e.what());
    }
  };

  LossBundle out;
  out.lambda = options.lambda;
  std::vector<Tensor> d_its, pooled_img;
  out.l_c = term("L_C", [&] {
    std::vector<std::size_t> ind_off;
    Tensor h_ind = model.encode_text_batch(indications, ind_off);
    for (std::size_t i = 0; i < b; ++i) {
      Tensor d_img = model.image_topics(batch[i]->views);
      Tensor h = b == 1 ? h_ind : slice_rows(h_ind, ind_off[i], ind_off[i + 1] - ind_off[i]);
      d_its.push_back(model.fuse(d_img, model.text_topics(h)));
      pooled_img.push_back(mean_rows(d_img));
    }
    Tensor all_d_it = b == 1 ? d_its.front() : concat_rows(d_its);
    return classification_loss(model.classify_states(all_d_it), one_hot(states, cfg.n_states));
  });

  out.l_ce = term("L_CE", [&] {
    Tensor h_dec = model.decode_hidden_batch(prefixes, d_its);
    return generation_loss(model.word_distribution(h_dec), targets);
  });

  out.l_cl = term("L_CL", [&] {
    std::vector<std::size_t> rep_off;
    Tensor h_rep = model.encode_text_batch(reports, rep_off);
    std::vector<Tensor> pooled_txt;
    for (std::size_t i = 0; i < b; ++i) {
      Tensor h = b == 1 ? h_rep : slice_rows(h_rep, rep_off[i], rep_off[i + 1] - rep_off[i]);
      pooled_txt.push_back(mean_rows(h));
    }
    auto [z_img, z_txt] = contrastive_project(stack_rows(pooled_img), stack_rows(pooled_txt), head);
    return contrastive_loss(z_img, z_txt, labels, options.contrastive);
  });
  out.l_total = total_loss(out.l_c, out.l_ce, out.l_cl, options.lambda);
  return out;
}

void check_finite(const LossBundle &l) {
  const std::pair<const char *, const Tensor *> terms[] = {
      {"L_C", &l.l_c}, {"L_CE", &l.l_ce}, {"L_CL", &l.l_cl}, {"L_total", &l.l_total}};
  for (auto [name, t] : terms) {
    if (!std::isfinite(t->item())) throw NumericError(std::string("non-finite loss term ") + name);
  }
}

nlohmann::json EpochLog::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"l_c", l_c}, {"l_ce", l_ce}, {"l_cl", l_cl}, {"l_total", l_total}};
  j["val_bleu4"] = val_bleu4 ? nlohmann::json(*val_bleu4) : nlohmann::json(nullptr);
  return j;
}

TrainState init_train_state(const RunConfig &config, std::size_t vocab_size) {
  ModelConfig m = config.model;
  m.vocab_size = vocab_size;
  m.validate();
  return TrainState{MsclModel(m, config.seed), ContrastiveHead(m.d, config.d_proj, config.seed + 1), {}, 0, -1.0};
}

std::vector<std::pair<std::string, Tensor>> trainable_parameters(const TrainState &state) {
  auto out = state.model.named_parameters();
  for (auto &p : state.head.named_parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x6d73636cu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

GenerationResult generate_and_score(const MsclModel &model, std::span<const Example> examples,
                                    const Vocabulary &vocab, const DecodeOptions &options) {
  if (examples.empty()) throw EmptyInputError("no examples to generate for");
  GenerationResult res;
  std::size_t correct = 0, total = 0;
  for (const auto &ex : examples) {
    Tensor d_it = model.disease_embeddings(ex.views, ex.indication);
    Tensor p = model.classify_states(d_it);
    const std::size_t k = p.cols();
    for (std::size_t t = 0; t < ex.states.size(); ++t) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (p.at(t, j) > p.at(t, best)) best = j;
      correct += best == ex.states[t];
      ++total;
    }
    const auto ids = model.generate_from(d_it, options);
    res.records.push_back({ex.id, detokenize(vocab.decode(ids)), ex.reference});
  }
  res.state_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  const auto pairs = to_eval_pairs(res.records);
  res.metrics = evaluate_corpus(pairs);
  return res;
}

std::vector<EpochLog> train_epochs(TrainState &state, const RunConfig &config, std::span<const Example> train,
                                   std::span<const Example> val, const Vocabulary &vocab,
                                   const TrainHooks &hooks) {
  if (train.empty()) throw EmptyInputError("training set is empty");
  config.validate();
  auto named = trainable_parameters(state);
  std::vector<Tensor> params;
  for (auto &[name, t] : named) params.push_back(t);
  zero_grad(params);

  const AdamWOptions adam{.lr = config.lr, .weight_decay = config.weight_decay};
  LossOptions loss_opts;
  loss_opts.lambda = config.lambda;
  loss_opts.contrastive = {config.tau, config.theta, config.label_match};
  DecodeOptions decode{config.decode, config.beam_width};

  std::vector<EpochLog> logs;
  std::size_t step = 0;
  for (std::size_t epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const Example *> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(&train[order[i]]);
      Tape tape;
      LossBundle losses;
      {
        TapeScope scope(tape);
        losses = forward_losses(state.model, state.head, batch, loss_opts);
      }
      check_finite(losses);
      tape.backward(losses.l_total);
      // Parameters outside this batch's graph still take the decay step.
      for (auto &p : params) p.mutable_grad();
      adamw_step(params, adam, state.optimizer);
      zero_grad(params);
      log.l_c += losses.l_c.item();
      log.l_ce += losses.l_ce.item();
      log.l_cl += losses.l_cl.item();
      log.l_total += losses.l_total.item();
      ++batches;
      if (hooks.on_step) hooks.on_step(++step, losses);
    }
    const double nb = static_cast<double>(batches);
    log.l_c /= nb;
    log.l_ce /= nb;
    log.l_cl /= nb;
    log.l_total /= nb;
    if (!val.empty() && config.val_every != 0 && epoch % config.val_every == 0) {
      log.val_bleu4 = generate_and_score(state.model, val, vocab, decode).metrics.bleu4;
    }
    state.epoch = epoch;
    logs.push_back(log);
    if (hooks.on_epoch && !hooks.on_epoch(log, state)) break;
  }
  return logs;
}

}  // namespace mscl
