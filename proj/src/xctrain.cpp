#include "skimlab/xctrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "skimlab/common.hpp"
#include "skimlab/rng.hpp"

namespace skimlab {

namespace {

constexpr uint64_t kStreamEpoch = 21;

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Embedding> query_embeddings(const World& world, const EncoderSpec& spec,
                                        const std::vector<int>& query_ids) {
  std::vector<Embedding> out(query_ids.size());
  parallel_for(0, query_ids.size(), [&](std::size_t i) {
    out[i] = embed(spec, world.queries[query_ids[i]].surface);
  });
  return out;
}

double positive_weight(const Interaction& p, const TrainConfig& cfg) {
  double w = static_cast<double>(p.weight);
  if (cfg.positive_weighting == PositiveWeighting::kIps) {
    if (cfg.pair_propensities.has_value()) {
      auto it = cfg.pair_propensities->find(pair_key(p.query, p.doc));
      if (it == cfg.pair_propensities->end() || it->second <= 0.0) {
        throw ArgumentError("train_ova: observed pair (" + std::to_string(p.query) + ", " +
                            std::to_string(p.doc) + ") has no positive golden propensity");
      }
      return w / it->second;
    }
    if (!cfg.propensities.has_value()) {
      throw ArgumentError("train_ova: ips weighting requires propensities");
    }
    double pl = cfg.propensities->values.at(static_cast<std::size_t>(p.doc));
    if (pl <= 0.0) throw ArgumentError("train_ova: propensity must be positive");
    return w / pl;
  }
  return w;
}

}  // namespace

double OvaModel::score(const Embedding& query_embedding, int doc) const {
  const double* row = &weights[static_cast<std::size_t>(doc) * dim];
  double s = bias[doc];
  for (int i = 0; i < dim; ++i) s += row[i] * query_embedding[i];
  return s;
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (cfg.l2 < 0.0) throw ConfigError("train config: l2 must be >= 0");
  if (cfg.negatives_per_positive < 0) {
    throw ConfigError("train config: negatives_per_positive must be >= 0");
  }
  if (cfg.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
}

PropensityVector estimate_propensities(const InteractionSet& train,
                                       const PropensityModelConfig& cfg) {
  if (train.pairs.empty()) {
    throw ArgumentError("estimate_propensities: empty training set");
  }
  std::vector<int> doc_counts(train.n_docs, 0);
  std::vector<uint8_t> query_seen(train.n_queries, 0);
  for (const auto& p : train.pairs) {
    doc_counts[p.doc] += 1;
    query_seen[p.query] = 1;
  }
  long long n_train_queries = 0;
  for (uint8_t s : query_seen) n_train_queries += s;
  double c = (std::log(static_cast<double>(n_train_queries)) - 1.0) *
             std::pow(cfg.b + 1.0, cfg.a);
  PropensityVector out;
  out.values.resize(train.n_docs);
  for (int d = 0; d < train.n_docs; ++d) {
    double p = 1.0 / (1.0 + c * std::exp(-cfg.a * std::log(doc_counts[d] + cfg.b)));
    out.values[d] = std::min(1.0, std::max(cfg.p_min, p));
  }
  return out;
}

PairPropensityMap golden_propensities(const World& world, const ClickModelConfig& cfg,
                                      const EncoderSpec& deployed) {
  InteractionSet truth = full_ground_truth(world);
  InteractionSet candidates = topk_candidates(world, deployed, cfg.top_k);
  std::vector<Embedding> doc_emb(world.n_documents());
  parallel_for(0, doc_emb.size(), [&](std::size_t d) {
    doc_emb[d] = embed(deployed, world.documents[d].surface);
  });
  PairPropensityMap out;
  out.reserve(truth.pairs.size());
  std::size_t ci = 0;
  Embedding qe;
  int last_q = -1;
  for (const auto& p : truth.pairs) {
    while (ci < candidates.pairs.size() && pair_less(candidates.pairs[ci], p)) ++ci;
    bool exposed = ci < candidates.pairs.size() && candidates.pairs[ci].query == p.query &&
                   candidates.pairs[ci].doc == p.doc;
    double prob = 0.0;
    if (exposed) {
      if (p.query != last_q) {
        qe = embed(deployed, world.queries[p.query].surface);
        last_q = p.query;
      }
      double s01 = 0.5 * (dot(qe, doc_emb[p.doc]) + 1.0);
      prob = cfg.exposure_b * click_sigmoid(s01, cfg.temperature);
    }
    out.emplace(pair_key(p.query, p.doc), prob);
  }
  return out;
}

double full_loss_and_grad(const OvaModel& model, const InteractionSet& train, const World& world,
                          const TrainConfig& cfg, std::vector<double>* grad) {
  const int dim = model.dim;
  const int n_docs = model.n_docs;
  if (grad != nullptr) grad->assign(static_cast<std::size_t>(n_docs) * dim + n_docs, 0.0);

  // Positive weights per (query, doc); everything else is a negative.
  std::unordered_map<uint64_t, double> positives;
  positives.reserve(train.pairs.size());
  for (const auto& p : train.pairs) positives[pair_key(p.query, p.doc)] = positive_weight(p, cfg);

  std::vector<int> all_queries;
  {
    std::vector<uint8_t> seen(world.n_queries(), 0);
    for (const auto& p : train.pairs) seen[p.query] = 1;
    for (int q = 0; q < world.n_queries(); ++q) {
      if (seen[q]) all_queries.push_back(q);
    }
  }
  std::vector<Embedding> emb = query_embeddings(world, model.encoder, all_queries);

  double loss = 0.0;
  for (std::size_t qi = 0; qi < all_queries.size(); ++qi) {
    const int q = all_queries[qi];
    const Embedding& e = emb[qi];
    for (int d = 0; d < n_docs; ++d) {
      double s = model.score(e, d);
      auto it = positives.find(pair_key(q, d));
      double y = it != positives.end() ? 1.0 : 0.0;
      double w = y > 0.0 ? it->second : 1.0;
      loss += w * (softplus(s) - y * s);
      if (grad != nullptr) {
        double g = w * (sigmoid(s) - y);
        double* grow = grad->data() + static_cast<std::size_t>(d) * dim;
        for (int i = 0; i < dim; ++i) grow[i] += g * e[i];
        (*grad)[static_cast<std::size_t>(n_docs) * dim + d] += g;
      }
    }
  }
  if (cfg.l2 > 0.0) {
    double reg = 0.0;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      reg += model.weights[i] * model.weights[i];
      if (grad != nullptr) (*grad)[i] += cfg.l2 * model.weights[i];
    }
    loss += 0.5 * cfg.l2 * reg;
  }
  return loss;
}

OvaModel train_ova(const InteractionSet& train, const World& world, const TrainConfig& cfg) {
  validate(cfg);
  if (train.n_queries != world.n_queries() || train.n_docs != world.n_documents()) {
    throw ArgumentError("train_ova: interaction set dimensions do not match the world");
  }
  OvaModel model;
  model.n_docs = world.n_documents();
  model.dim = world.config.dim;
  model.encoder = EncoderSpec{};  // full, normalized
  model.weights.assign(static_cast<std::size_t>(model.n_docs) * model.dim, 0.0);
  model.bias.assign(model.n_docs, 0.0);
  if (cfg.epochs == 0 || train.pairs.empty()) return model;

  if (cfg.negatives_per_positive == 0) {
    // Full dense loss: plain gradient descent, one step per epoch.
    std::vector<double> grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double loss = full_loss_and_grad(model, train, world, cfg, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("train_ova: non-finite loss at epoch " + std::to_string(epoch) +
                              " (learning_rate " + format_double(cfg.learning_rate) + ")");
      }
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        model.weights[i] -= cfg.learning_rate * grad[i];
      }
      for (int d = 0; d < model.n_docs; ++d) {
        model.bias[d] -= cfg.learning_rate * grad[static_cast<std::size_t>(model.n_docs) * model.dim + d];
      }
    }
    return model;
  }

  // Mini-batch SGD over positives with uniformly sampled negatives.
  std::vector<int> distinct_queries;
  std::vector<int> emb_slot(world.n_queries(), -1);
  for (const auto& p : train.pairs) {
    if (emb_slot[p.query] < 0) {
      emb_slot[p.query] = static_cast<int>(distinct_queries.size());
      distinct_queries.push_back(p.query);
    }
  }
  std::vector<Embedding> emb = query_embeddings(world, model.encoder, distinct_queries);
  std::vector<double> pos_weight(train.pairs.size());
  for (std::size_t i = 0; i < train.pairs.size(); ++i) {
    pos_weight[i] = positive_weight(train.pairs[i], cfg);
  }

  std::vector<std::size_t> order(train.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  struct RowGrad {
    int doc;
    std::vector<double> g;  // dim + 1, bias last
  };
  std::unordered_map<int, std::size_t> row_of;
  std::vector<RowGrad> batch_grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = derive_rng(cfg.seed, {kStreamEpoch, static_cast<uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      std::size_t batch_end = std::min(order.size(), done + static_cast<std::size_t>(cfg.batch_size));
      row_of.clear();
      batch_grads.clear();
      auto row = [&](int doc) -> std::vector<double>& {
        auto it = row_of.find(doc);
        if (it == row_of.end()) {
          row_of.emplace(doc, batch_grads.size());
          batch_grads.push_back(RowGrad{doc, std::vector<double>(model.dim + 1, 0.0)});
          return batch_grads.back().g;
        }
        return batch_grads[it->second].g;
      };
      for (std::size_t t = done; t < batch_end; ++t) {
        const Interaction& p = train.pairs[order[t]];
        const Embedding& e = emb[emb_slot[p.query]];
        {
          double s = model.score(e, p.doc);
          double w = pos_weight[order[t]];
          epoch_loss += w * (softplus(s) - s);
          double g = w * (sigmoid(s) - 1.0);
          auto& r = row(p.doc);
          for (int i = 0; i < model.dim; ++i) r[i] += g * e[i];
          r[model.dim] += g;
        }
        for (int nneg = 0; nneg < cfg.negatives_per_positive; ++nneg) {
          int nd = rng.below_int(model.n_docs);
          if (nd == p.doc) nd = (nd + 1) % model.n_docs;
          double s = model.score(e, nd);
          epoch_loss += softplus(s);
          double g = sigmoid(s);
          auto& r = row(nd);
          for (int i = 0; i < model.dim; ++i) r[i] += g * e[i];
          r[model.dim] += g;
        }
      }
      // Deterministic apply order, L2 on touched rows only.
      std::sort(batch_grads.begin(), batch_grads.end(),
                [](const RowGrad& a, const RowGrad& b) { return a.doc < b.doc; });
      const double scale = cfg.learning_rate / static_cast<double>(batch_end - done);
      for (const auto& rg : batch_grads) {
        double* wrow = &model.weights[static_cast<std::size_t>(rg.doc) * model.dim];
        for (int i = 0; i < model.dim; ++i) {
          wrow[i] -= scale * (rg.g[i] + cfg.l2 * wrow[i]);
        }
        model.bias[rg.doc] -= scale * rg.g[model.dim];
      }
      done = batch_end;
    }
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("train_ova: non-finite loss at epoch " + std::to_string(epoch) +
                            " (learning_rate " + format_double(cfg.learning_rate) + ")");
    }
  }
  return model;
}

std::vector<std::vector<int>> predict_topk(const OvaModel& model, const std::vector<int>& queries,
                                           const World& world, int k, int threads) {
  if (k < 1) throw ArgumentError("predict_topk: k must be >= 1");
  const int kk = std::min(k, model.n_docs);
  std::vector<std::vector<int>> out(queries.size());
  parallel_for(
      0, queries.size(),
      [&](std::size_t qi) {
        Embedding e = embed(model.encoder, world.queries[queries[qi]].surface);
        std::vector<std::pair<double, int>> scored(model.n_docs);
        for (int d = 0; d < model.n_docs; ++d) scored[d] = {model.score(e, d), d};
        auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
          return a.first != b.first ? a.first > b.first : a.second < b.second;
        };
        std::partial_sort(scored.begin(), scored.begin() + kk, scored.end(), better);
        out[qi].reserve(kk);
        for (int i = 0; i < kk; ++i) out[qi].push_back(scored[i].second);
      },
      threads);
  return out;
}

void save_model(const OvaModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot open model file for writing: " + path);
  const char magic[4] = {'O', 'V', 'A', 'M'};
  uint32_t version = 1;
  uint64_t l = static_cast<uint64_t>(model.n_docs), d = static_cast<uint64_t>(model.dim);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&l), sizeof(l));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  std::vector<float> buf(model.weights.begin(), model.weights.end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  std::vector<float> bias(model.bias.begin(), model.bias.end());
  out.write(reinterpret_cast<const char*>(bias.data()), static_cast<std::streamsize>(bias.size() * sizeof(float)));
  if (!out) throw ArgumentError("short write: " + path);
}

OvaModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open model file: " + path);
  char magic[4];
  uint32_t version = 0;
  uint64_t l = 0, d = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&l), sizeof(l));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!in || std::memcmp(magic, "OVAM", 4) != 0 || version != 1) {
    throw ArgumentError("model file: bad header: " + path);
  }
  OvaModel model;
  model.n_docs = static_cast<int>(l);
  model.dim = static_cast<int>(d);
  std::vector<float> buf(l * d);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  std::vector<float> bias(l);
  in.read(reinterpret_cast<char*>(bias.data()), static_cast<std::streamsize>(bias.size() * sizeof(float)));
  if (!in) throw ArgumentError("model file: truncated: " + path);
  model.weights.assign(buf.begin(), buf.end());
  model.bias.assign(bias.begin(), bias.end());
  return model;
}

}  // namespace skimlab
