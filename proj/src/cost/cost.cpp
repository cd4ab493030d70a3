#include "mea/cost/cost.hpp"

#include <cmath>
#include <string>

#include "mea/errors.hpp"

namespace mea::cost {

double upload_power_mw(double s_upload_mbps) {
  if (!(s_upload_mbps >= 0.0) || !std::isfinite(s_upload_mbps)) {
    throw InvalidInputError("upload throughput must be a nonnegative number");
  }
  return 283.17 * s_upload_mbps + 132.86;
}

double upload_time_ms(double bytes, double s_upload_mbps) {
  if (!(s_upload_mbps > 0.0)) throw InvalidInputError("upload throughput must be positive");
  if (!(bytes >= 0.0)) throw InvalidInputError("payload size must be nonnegative");
  return 8.0 * bytes / (s_upload_mbps * 1e6) * 1e3;
}

double comm_energy_mj(double power_w, double time_ms) {
  if (!(power_w >= 0.0) || !(time_ms >= 0.0)) throw InvalidInputError("negative power or time");
  return power_w * time_ms;
}

double compute_energy_mj(double power_w, double time_ms) {
  if (!(power_w >= 0.0) || !(time_ms >= 0.0)) throw InvalidInputError("negative power or time");
  return power_w * time_ms;
}

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kEdgeOnly:
      return "edge";
    case Strategy::kCloudOnly:
      return "cloud";
    case Strategy::kEdgeCloudRaw:
      return "edge-cloud-raw";
    case Strategy::kEdgeCloudFeatures:
      return "edge-cloud-features";
  }
  return "edge";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "edge") return Strategy::kEdgeOnly;
  if (s == "cloud") return Strategy::kCloudOnly;
  if (s == "edge-cloud-raw") return Strategy::kEdgeCloudRaw;
  if (s == "edge-cloud-features") return Strategy::kEdgeCloudFeatures;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

void CostParams::validate(Strategy strategy) const {
  for (double v : {n, x, x_cl, x_cu, x_cu_prime}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInputError("cost parameters must be nonnegative");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidInputError("beta must lie in [0, 1]");
  if (strategy == Strategy::kEdgeCloudFeatures) {
    if (!q) throw ConfigError("feature offloading needs the edge layer share q");
    if (!(*q > 0.0 && *q < 1.0)) throw InvalidInputError("q must lie in (0, 1)");
  }
}

CostBreakdown strategy_cost(Strategy strategy, const CostParams& p) {
  p.validate(strategy);
  CostBreakdown c;
  switch (strategy) {
    case Strategy::kEdgeOnly:
      c.edge_compute = p.n * p.x;
      break;
    case Strategy::kCloudOnly:
      c.cloud_compute = p.n * p.x_cl;
      c.communication = p.n * p.x_cu;
      break;
    case Strategy::kEdgeCloudRaw:
      c.edge_compute = p.n * p.x;
      c.cloud_compute = p.beta * p.n * p.x_cl;
      c.communication = p.beta * p.n * p.x_cu;
      break;
    case Strategy::kEdgeCloudFeatures:
      c.edge_compute = p.n * (*p.q * p.x);
      c.cloud_compute = p.beta * p.n * ((1.0 - *p.q) * p.x_cl);
      c.communication = p.beta * p.n * p.x_cu_prime;
      break;
  }
  c.total = c.edge_compute + c.cloud_compute + c.communication;
  return c;
}

PathEnergy path_energy(const EnergyParams& params, double extension_mac_ratio,
                       std::size_t feature_dim) {
  if (!(extension_mac_ratio >= 0.0)) throw InvalidInputError("MAC ratio must be nonnegative");
  PathEnergy e;
  e.main_mj = compute_energy_mj(params.gpu_power_w, params.t_cp_ms);
  e.extension_extra_mj = e.main_mj * extension_mac_ratio;
  const double p_up_w = upload_power_mw(params.s_upload_mbps) / 1e3;
  e.comm_raw_mj = comm_energy_mj(p_up_w, upload_time_ms(params.raw_bytes, params.s_upload_mbps));
  const double feature_bytes = params.feature_bytes.value_or(8.0 * static_cast<double>(feature_dim));
  e.comm_features_mj = comm_energy_mj(p_up_w, upload_time_ms(feature_bytes, params.s_upload_mbps));
  e.cloud_mj = params.cloud_mj;
  return e;
}

MeasuredCost measured_cost_report(std::span<const router::RoutingRecord> records,
                                  const PathEnergy& energy) {
  MeasuredCost m;
  m.instances = records.size();
  std::size_t at_cloud = 0;
  for (const auto& r : records) {
    m.breakdown.edge_compute += energy.main_mj;
    if (r.conf_ext) m.breakdown.edge_compute += energy.extension_extra_mj;
    if (r.offload_attempted) {
      m.breakdown.communication += (r.payload == router::PayloadKind::kFeatures)
                                       ? energy.comm_features_mj
                                       : energy.comm_raw_mj;
    }
    if (r.decision == router::Exit::kCloud) {
      ++at_cloud;
      m.breakdown.cloud_compute += energy.cloud_mj;
    }
  }
  m.beta = records.empty() ? 0.0 : static_cast<double>(at_cloud) / static_cast<double>(records.size());
  m.breakdown.total = m.breakdown.edge_compute + m.breakdown.cloud_compute + m.breakdown.communication;
  return m;
}

}  // namespace mea::cost
