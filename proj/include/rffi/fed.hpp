#ifndef RFFI_FED_HPP
#define RFFI_FED_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rffi/riei.hpp"

namespace rffi::fed {

struct ClientState {
  int client_id = 0;  // unique, aggregation runs in ascending order
  std::vector<const synth::LabeledSample*> data;
  // 0 inherits the corresponding stepsize from FedConfig::train.
  double eta_F = 0.0;
  double eta_E = 0.0;
  double eta_R = 0.0;
  std::size_t N() const { return data.size(); }
};

enum class Compressor { None, Sign, NoisySignGaussian, NoisySignUniform };

struct FedConfig {
  std::size_t T = 1;             // communication rounds
  std::size_t local_epochs = 1;  // L
  Compressor compressor = Compressor::None;
  double sigma = 0.01;           // noise scale of the dithered variants
  // Uniform server stepsize; 0 means per-block match of the client
  // stepsizes (eta_F / eta_E / eta_R).
  double server_eta = 0.0;
  riei::TrainConfig train;       // client-local training settings
  std::uint64_t seed = 0;
};

// Stepsize-normalized update, flattened per stack:
// delta = (theta_global - theta_local_after_L_epochs) / eta_block.
struct Delta {
  std::vector<double> fed;
  std::vector<double> ec;
  std::vector<double> rc;
  std::size_t coord_count() const {
    return fed.size() + ec.size() + rc.size();
  }
};

struct CompressedDelta {
  std::vector<double> fed;  // entries in {+1, -1} when compressed
  std::vector<double> ec;
  std::vector<double> rc;
  bool compressed = false;
  std::size_t coord_count() const {
    return fed.size() + ec.size() + rc.size();
  }
  std::uint64_t payload_bits() const {
    return static_cast<std::uint64_t>(coord_count()) * (compressed ? 1 : 64);
  }
};

struct ClientUpdate {
  Delta delta;
  // Post-training BatchNorm running statistics, in buffer order; the server
  // aggregates them by weighted average outside the compressed payload.
  std::vector<double> bn_stats;
  double mean_loss = 0.0;
};

// L local epochs of alternating steps starting from the global parameters.
ClientUpdate client_update(const ClientState& state,
                           const riei::RieiParams& global,
                           const FedConfig& cfg, RngStream& rng);

// Sign(x) = +1 if x >= 0 else -1, applied after adding dither:
// none for Sign, Normal(0, sigma^2) for NoisySignGaussian,
// Uniform(-sigma sqrt(3), sigma sqrt(3)) for NoisySignUniform. Draw order is
// fed, ec, rc coordinates in index order.
CompressedDelta compress(const Delta& delta, Compressor scheme, double sigma,
                         RngStream& rng);

struct ServerEtas {
  double fed = 0.0;
  double ec = 0.0;
  double rc = 0.0;
};

// theta <- theta - eta_block * sum_k weights[k] * deltas[k], accumulated in
// the given (ascending client) order. Weights must sum to 1 within 1e-12.
void server_round(riei::RieiParams& global,
                  const std::vector<CompressedDelta>& deltas,
                  const std::vector<double>& weights, const ServerEtas& etas);

struct RoundLog {
  std::size_t round = 0;
  std::vector<double> client_losses;
  std::uint64_t cumulative_bits = 0;
  double eval_accuracy = 0.0;
};

using RoundEval = std::function<double(riei::RieiParams&)>;

// Algorithm: per round, every client copies the global parameters, trains
// locally, uploads a (possibly sign-compressed) normalized delta; the server
// applies the weighted aggregate and averages BatchNorm running statistics.
// Client RNG streams are keyed by (seed, client, round), so results do not
// depend on client execution order.
std::vector<RoundLog> fed_fit(riei::RieiParams& global,
                              const std::vector<ClientState>& clients,
                              const FedConfig& cfg,
                              const RoundEval& eval = nullptr);

// Cumulative uplink bits per round, extracted from the logs.
std::vector<std::uint64_t> bits_accounting(const std::vector<RoundLog>& logs);

// CSV: round, loss_client_<id>..., cumulative_bits, eval_accuracy.
std::string round_log_csv(const std::vector<RoundLog>& logs);

} // namespace rffi::fed

#endif
