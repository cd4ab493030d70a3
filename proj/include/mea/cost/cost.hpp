#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "mea/router/router.hpp"

namespace mea::cost {

// WiFi upload power law, in mW, for a throughput in Mbps.
double upload_power_mw(double s_upload_mbps);
// Time to push `bytes` at `s_upload_mbps`, in ms.
double upload_time_ms(double bytes, double s_upload_mbps);
// W x ms = mJ.
double comm_energy_mj(double power_w, double time_ms);
double compute_energy_mj(double power_w, double time_ms);

enum class Strategy { kEdgeOnly, kCloudOnly, kEdgeCloudRaw, kEdgeCloudFeatures };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);

// Per-instance costs share one unit (energy or latency); the breakdown comes
// back in that unit.
struct CostParams {
  double n = 0.0;           // instances
  double x = 0.0;           // edge compute per instance
  double x_cl = 0.0;        // cloud compute per instance
  double x_cu = 0.0;        // raw upload per instance
  double x_cu_prime = 0.0;  // feature upload per instance
  std::optional<double> q;  // edge share of a split network's layers
  double beta = 0.0;        // offloaded fraction

  void validate(Strategy strategy) const;
};

struct CostBreakdown {
  double edge_compute = 0.0;
  double cloud_compute = 0.0;
  double communication = 0.0;
  double total = 0.0;
};

CostBreakdown strategy_cost(Strategy strategy, const CostParams& params);

struct EnergyParams {
  double s_upload_mbps = 18.88;
  double gpu_power_w = 56.0;
  double t_cp_ms = 0.056;      // main path compute time per instance
  double raw_bytes = 3072.0;
  std::optional<double> feature_bytes;  // defaults to feature_dim x 8
  double cloud_mj = 0.0;       // cloud compute per offloaded instance
  double q = 0.5;              // edge share when features are offloaded
};

// Per-instance energies of each path, in mJ.
struct PathEnergy {
  double main_mj = 0.0;
  double extension_extra_mj = 0.0;  // added when the extension runs
  double comm_raw_mj = 0.0;
  double comm_features_mj = 0.0;
  double cloud_mj = 0.0;
};

// `extension_mac_ratio` = MACs of adaptive + extension + exit 2 over the
// MACs of main + exit 1; the extension's compute time scales by it.
PathEnergy path_energy(const EnergyParams& params, double extension_mac_ratio,
                       std::size_t feature_dim);

struct MeasuredCost {
  std::size_t instances = 0;
  double beta = 0.0;
  CostBreakdown breakdown;  // mJ
};

// Every instance pays the main path; instances whose extension ran pay its
// share on top; offloads pay the upload for their payload kind (also when
// the transport then fails) and the cloud compute when they complete.
MeasuredCost measured_cost_report(std::span<const router::RoutingRecord> records,
                                  const PathEnergy& energy);

}  // namespace mea::cost
