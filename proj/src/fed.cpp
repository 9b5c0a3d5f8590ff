#include "rffi/fed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rffi/errors.hpp"

namespace rffi::fed {

namespace {

std::vector<double> gather_bn_stats(riei::RieiParams& model) {
  std::vector<double> out;
  for (LayerStack* stack : {&model.fed, &model.ec, &model.rc})
    for (Layer& layer : stack->layers())
      if (layer.spec.kind == LayerKind::BatchNorm1D) {
        out.insert(out.end(), layer.running_mean.begin(),
                   layer.running_mean.end());
        out.insert(out.end(), layer.running_var.begin(),
                   layer.running_var.end());
      }
  return out;
}

void set_bn_stats(riei::RieiParams& model, const std::vector<double>& flat) {
  std::size_t off = 0;
  for (LayerStack* stack : {&model.fed, &model.ec, &model.rc})
    for (Layer& layer : stack->layers())
      if (layer.spec.kind == LayerKind::BatchNorm1D) {
        for (double& v : layer.running_mean) v = flat[off++];
        for (double& v : layer.running_var) v = flat[off++];
      }
  if (off != flat.size())
    throw InvalidInputError("fed: BatchNorm statistics size mismatch");
}

std::vector<double> normalized_delta(const std::vector<double>& before,
                                     const std::vector<double>& after,
                                     double eta) {
  if (!(eta > 0.0)) throw ConfigError("fed: stepsize must be positive");
  std::vector<double> d(before.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = (before[i] - after[i]) / eta;
  return d;
}

void compress_block(const std::vector<double>& in, std::vector<double>& out,
                    Compressor scheme, double sigma, RngStream& rng) {
  out.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    double x = in[i];
    if (scheme == Compressor::NoisySignGaussian) {
      x += sigma * rng.normal();
    } else if (scheme == Compressor::NoisySignUniform) {
      const double a = sigma * std::sqrt(3.0);
      x += rng.uniform(-a, a);
    }
    out[i] = (x >= 0.0) ? 1.0 : -1.0;
  }
}

void apply_block(LayerStack& stack, const std::vector<double>& agg,
                 double eta) {
  std::vector<double> flat = stack.flatten_values();
  if (flat.size() != agg.size())
    throw InvalidInputError("server_round: delta shape mismatch for stack " +
                            stack.name());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= eta * agg[i];
  stack.assign_values(flat);
}

struct ResolvedEtas {
  double fed, ec, rc;
};

ResolvedEtas resolve_etas(const FedConfig& cfg) {
  if (cfg.server_eta > 0.0)
    return {cfg.server_eta, cfg.server_eta, cfg.server_eta};
  return {cfg.train.eta_F, cfg.train.eta_E, cfg.train.eta_R};
}

} // namespace

ClientUpdate client_update(const ClientState& state,
                           const riei::RieiParams& global,
                           const FedConfig& cfg, RngStream& rng) {
  if (state.data.empty())
    throw ConfigError("client_update: client " +
                      std::to_string(state.client_id) + " has no data");
  riei::RieiParams local = global;
  riei::TrainConfig tc = cfg.train;
  if (state.eta_F > 0.0) tc.eta_F = state.eta_F;
  if (state.eta_E > 0.0) tc.eta_E = state.eta_E;
  if (state.eta_R > 0.0) tc.eta_R = state.eta_R;

  const std::vector<double> before_fed = local.fed.flatten_values();
  const std::vector<double> before_ec = local.ec.flatten_values();
  const std::vector<double> before_rc = local.rc.flatten_values();

  std::vector<std::size_t> order(state.data.size());
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  std::size_t n_batches = 0;
  try {
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t ofs = 0; ofs < order.size(); ofs += tc.batch) {
        const std::size_t end = std::min(ofs + tc.batch, order.size());
        std::vector<const synth::LabeledSample*> chunk;
        chunk.reserve(end - ofs);
        for (std::size_t i = ofs; i < end; ++i)
          chunk.push_back(state.data[order[i]]);
        const riei::Batch batch = riei::make_batch(chunk);
        double loss = riei::classifier_step(local, batch, tc);
        if (!local.arch.baseline) {
          const auto [mi, ie] = riei::feature_step(local, batch, tc);
          loss += tc.lambda1 * mi - tc.lambda2 * ie;
        }
        loss_sum += loss;
        ++n_batches;
      }
    }
  } catch (const TrainingDivergedError& e) {
    throw TrainingDivergedError("client " + std::to_string(state.client_id) +
                                ": " + e.what());
  }

  ClientUpdate update;
  update.delta.fed =
      normalized_delta(before_fed, local.fed.flatten_values(), tc.eta_F);
  update.delta.ec =
      normalized_delta(before_ec, local.ec.flatten_values(), tc.eta_E);
  update.delta.rc =
      normalized_delta(before_rc, local.rc.flatten_values(), tc.eta_R);
  update.bn_stats = gather_bn_stats(local);
  update.mean_loss =
      n_batches == 0 ? 0.0 : loss_sum / static_cast<double>(n_batches);
  return update;
}

CompressedDelta compress(const Delta& delta, Compressor scheme, double sigma,
                         RngStream& rng) {
  if (sigma < 0.0) throw ConfigError("compress: sigma must be >= 0");
  CompressedDelta out;
  if (scheme == Compressor::None) {
    out.fed = delta.fed;
    out.ec = delta.ec;
    out.rc = delta.rc;
    out.compressed = false;
    return out;
  }
  compress_block(delta.fed, out.fed, scheme, sigma, rng);
  compress_block(delta.ec, out.ec, scheme, sigma, rng);
  compress_block(delta.rc, out.rc, scheme, sigma, rng);
  out.compressed = true;
  return out;
}

void server_round(riei::RieiParams& global,
                  const std::vector<CompressedDelta>& deltas,
                  const std::vector<double>& weights, const ServerEtas& etas) {
  if (deltas.size() != weights.size())
    throw InvalidInputError("server_round: weights/deltas length mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-12)
    throw ConfigError("server_round: weights must sum to 1");

  std::vector<double> agg_fed(global.fed.param_count(), 0.0);
  std::vector<double> agg_ec(global.ec.param_count(), 0.0);
  std::vector<double> agg_rc(global.rc.param_count(), 0.0);
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const CompressedDelta& d = deltas[k];
    if (d.fed.size() != agg_fed.size() || d.ec.size() != agg_ec.size() ||
        d.rc.size() != agg_rc.size())
      throw InvalidInputError("server_round: delta shape mismatch");
    for (std::size_t i = 0; i < d.fed.size(); ++i)
      agg_fed[i] += weights[k] * d.fed[i];
    for (std::size_t i = 0; i < d.ec.size(); ++i)
      agg_ec[i] += weights[k] * d.ec[i];
    for (std::size_t i = 0; i < d.rc.size(); ++i)
      agg_rc[i] += weights[k] * d.rc[i];
  }
  apply_block(global.fed, agg_fed, etas.fed);
  apply_block(global.ec, agg_ec, etas.ec);
  apply_block(global.rc, agg_rc, etas.rc);
}

std::vector<RoundLog> fed_fit(riei::RieiParams& global,
                              const std::vector<ClientState>& clients,
                              const FedConfig& cfg, const RoundEval& eval) {
  if (clients.size() < 2) throw ConfigError("fed_fit: need >= 2 clients");
  if (cfg.local_epochs < 1)
    throw ConfigError("fed_fit: local_epochs must be >= 1");
  std::vector<const ClientState*> ordered;
  ordered.reserve(clients.size());
  for (const ClientState& c : clients) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientState* a, const ClientState* b) {
              return a->client_id < b->client_id;
            });
  for (std::size_t i = 1; i < ordered.size(); ++i)
    if (ordered[i]->client_id == ordered[i - 1]->client_id)
      throw ConfigError("fed_fit: duplicate client id " +
                        std::to_string(ordered[i]->client_id));

  std::size_t total_n = 0;
  for (const ClientState* c : ordered) {
    if (c->data.empty())
      throw ConfigError("fed_fit: client " + std::to_string(c->client_id) +
                        " has no data");
    total_n += c->N();
  }
  std::vector<double> weights;
  weights.reserve(ordered.size());
  for (const ClientState* c : ordered)
    weights.push_back(static_cast<double>(c->N()) /
                      static_cast<double>(total_n));

  const ResolvedEtas re = resolve_etas(cfg);
  std::vector<RoundLog> logs;
  logs.reserve(cfg.T);
  std::uint64_t cumulative_bits = 0;

  for (std::size_t t = 0; t < cfg.T; ++t) {
    std::vector<CompressedDelta> deltas(ordered.size());
    std::vector<double> stats_acc;
    RoundLog log;
    log.round = t + 1;
    log.client_losses.resize(ordered.size());
    for (std::size_t c = 0; c < ordered.size(); ++c) {
      const ClientState& state = *ordered[c];
      RngStream client_rng = RngStream::derive(
          cfg.seed, "fed.client", static_cast<std::uint64_t>(state.client_id),
          t);
      ClientUpdate update;
      try {
        update = client_update(state, global, cfg, client_rng);
      } catch (const TrainingDivergedError& e) {
        throw TrainingDivergedError(std::string(e.what()) + " at round " +
                                    std::to_string(t));
      }
      RngStream comp_rng = RngStream::derive(
          cfg.seed, "fed.compress",
          static_cast<std::uint64_t>(state.client_id), t);
      deltas[c] = compress(update.delta, cfg.compressor, cfg.sigma, comp_rng);
      cumulative_bits += deltas[c].payload_bits();
      log.client_losses[c] = update.mean_loss;
      if (stats_acc.empty()) stats_acc.assign(update.bn_stats.size(), 0.0);
      for (std::size_t i = 0; i < update.bn_stats.size(); ++i)
        stats_acc[i] += weights[c] * update.bn_stats[i];
    }
    server_round(global, deltas, weights, {re.fed, re.ec, re.rc});
    set_bn_stats(global, stats_acc);
    log.cumulative_bits = cumulative_bits;
    log.eval_accuracy = eval ? eval(global) : 0.0;
    logs.push_back(std::move(log));
  }
  return logs;
}

std::vector<std::uint64_t> bits_accounting(const std::vector<RoundLog>& logs) {
  std::vector<std::uint64_t> out;
  out.reserve(logs.size());
  for (const RoundLog& log : logs) out.push_back(log.cumulative_bits);
  return out;
}

std::string round_log_csv(const std::vector<RoundLog>& logs) {
  std::string csv = "round";
  const std::size_t n_clients = logs.empty() ? 0 : logs[0].client_losses.size();
  for (std::size_t c = 0; c < n_clients; ++c)
    csv += ",loss_client_" + std::to_string(c + 1);
  csv += ",cumulative_bits,eval_accuracy\n";
  char buf[64];
  for (const RoundLog& log : logs) {
    csv += std::to_string(log.round);
    for (double loss : log.client_losses) {
      std::snprintf(buf, sizeof(buf), ",%.17g", loss);
      csv += buf;
    }
    csv += "," + std::to_string(log.cumulative_bits);
    std::snprintf(buf, sizeof(buf), ",%.17g", log.eval_accuracy);
    csv += buf;
    csv += "\n";
  }
  return csv;
}

} // namespace rffi::fed
