#include "gptrack/config.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "gptrack/csv.hpp"
#include "gptrack/errors.hpp"

namespace gptrack::io {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError(context + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ParseError(context + ": unknown key '" + item.key() + "'");
  }
}

double get_number(const json& j, const std::string& context) {
  if (!j.is_number()) throw ParseError(context + ": expected a number");
  return j.get<double>();
}

double number_or(const json& j, const char* key, const std::string& context,
                 double fallback) {
  if (!j.contains(key)) return fallback;
  return get_number(j.at(key), context + "." + key);
}

std::uint64_t uint_or(const json& j, const char* key, const std::string& context,
                      std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    throw ParseError(context + "." + key + ": expected an integer");
  }
  return v.get<std::uint64_t>();
}

int int_or(const json& j, const char* key, const std::string& context, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ParseError(context + "." + key + ": expected an integer");
  }
  return v.get<int>();
}

bool bool_or(const json& j, const char* key, const std::string& context, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ParseError(context + "." + key + ": expected a bool");
  return j.at(key).get<bool>();
}

template <typename Vec>
Vec fixed_vector(const json& j, const std::string& context, int size) {
  if (!j.is_array() || static_cast<int>(j.size()) != size) {
    throw ParseError(context + ": expected an array of " + std::to_string(size) +
                     " numbers");
  }
  Vec out;
  for (int i = 0; i < size; ++i) {
    out[i] = get_number(j.at(static_cast<std::size_t>(i)),
                        context + "[" + std::to_string(i) + "]");
  }
  return out;
}

template <typename Vec>
Vec vector_or(const json& j, const char* key, const std::string& context, int size,
              const Vec& fallback) {
  if (!j.contains(key)) return fallback;
  return fixed_vector<Vec>(j.at(key), context + "." + key, size);
}

}  // namespace

json kernel_to_json(const gp::KernelSpec& spec) {
  using Node = gp::KernelSpec::Node;
  json j;
  switch (spec.node()) {
    case Node::SquaredExponential: {
      const auto& p = spec.leaf_params();
      j["type"] = "se";
      j["signal_var"] = std::exp(p[0]);
      j["length_scale"] = std::exp(p[1]);
      break;
    }
    case Node::Periodic: {
      const auto& p = spec.leaf_params();
      j["type"] = "periodic";
      j["signal_var"] = std::exp(p[0]);
      j["length_scale"] = std::exp(p[1]);
      j["period"] = std::exp(p[2]);
      break;
    }
    case Node::Sum:
    case Node::Product:
      j["type"] = spec.node() == Node::Sum ? "sum" : "product";
      j["children"] = json::array(
          {kernel_to_json(spec.children()[0]), kernel_to_json(spec.children()[1])});
      break;
  }
  return j;
}

gp::KernelSpec kernel_from_json(const json& j, const std::string& context) {
  if (!j.is_object() || !j.contains("type") || !j.at("type").is_string()) {
    throw ParseError(context + ": kernel node needs a string 'type'");
  }
  const std::string type = j.at("type").get<std::string>();
  if (type == "se") {
    check_keys(j, context, {"type", "signal_var", "length_scale"});
    return gp::KernelSpec::squared_exponential(
        number_or(j, "signal_var", context, 1.0),
        number_or(j, "length_scale", context, 1.0));
  }
  if (type == "periodic") {
    check_keys(j, context, {"type", "signal_var", "length_scale", "period"});
    return gp::KernelSpec::periodic(number_or(j, "signal_var", context, 1.0),
                                    number_or(j, "length_scale", context, 1.0),
                                    number_or(j, "period", context, 4.0));
  }
  if (type == "sum" || type == "product") {
    check_keys(j, context, {"type", "children"});
    if (!j.contains("children") || !j.at("children").is_array() ||
        j.at("children").size() != 2) {
      throw ParseError(context + ": '" + type + "' node needs exactly two children");
    }
    gp::KernelSpec lhs = kernel_from_json(j.at("children").at(0), context + ".children[0]");
    gp::KernelSpec rhs = kernel_from_json(j.at("children").at(1), context + ".children[1]");
    return type == "sum" ? gp::KernelSpec::sum(std::move(lhs), std::move(rhs))
                         : gp::KernelSpec::product(std::move(lhs), std::move(rhs));
  }
  throw ParseError(context + ": unknown kernel type '" + type + "'");
}

ScenarioConfig parse_scenario(const json& j, const std::string& context) {
  check_keys(j, context,
             {"dh_table", "q_init", "p_goal", "insertion", "timing", "breathing",
              "sensor", "gp", "ik", "mpc", "disturbance", "seeds", "output", "assert"});

  ScenarioConfig cfg;
  sim::SimConfig& s = cfg.sim;

  if (!j.contains("dh_table")) throw ParseError(context + ": missing field 'dh_table'");
  {
    const json& table = j.at("dh_table");
    if (!table.is_array() || table.size() != kJoints) {
      throw ParseError(context + ".dh_table: expected " + std::to_string(kJoints) +
                       " rows");
    }
    for (int i = 0; i < kJoints; ++i) {
      const json& row = table.at(static_cast<std::size_t>(i));
      const std::string row_ctx = context + ".dh_table[" + std::to_string(i) + "]";
      check_keys(row, row_ctx, {"a", "alpha", "d", "theta_offset"});
      for (const char* field : {"a", "alpha", "d", "theta_offset"}) {
        if (!row.contains(field)) {
          throw ParseError(row_ctx + ": missing field '" + field + "'");
        }
      }
      s.dh.rows[static_cast<std::size_t>(i)] =
          kin::DhRow{get_number(row.at("a"), row_ctx + ".a"),
                     get_number(row.at("alpha"), row_ctx + ".alpha"),
                     get_number(row.at("d"), row_ctx + ".d"),
                     get_number(row.at("theta_offset"), row_ctx + ".theta_offset")};
    }
  }

  if (!j.contains("q_init")) throw ParseError(context + ": missing field 'q_init'");
  s.q_init = fixed_vector<Vector7d>(j.at("q_init"), context + ".q_init", kJoints);

  if (!j.contains("p_goal")) throw ParseError(context + ": missing field 'p_goal'");
  {
    const json& goal = j.at("p_goal");
    check_keys(goal, context + ".p_goal", {"position", "euler"});
    if (!goal.contains("position") || !goal.contains("euler")) {
      throw ParseError(context + ".p_goal: needs 'position' and 'euler'");
    }
    s.p_goal.position = fixed_vector<Eigen::Vector3d>(goal.at("position"),
                                                      context + ".p_goal.position", 3);
    s.p_goal.euler =
        fixed_vector<Eigen::Vector3d>(goal.at("euler"), context + ".p_goal.euler", 3);
  }

  if (j.contains("insertion")) {
    const json& ins = j.at("insertion");
    const std::string ctx = context + ".insertion";
    check_keys(ins, ctx, {"feed_length", "feed_speed", "feed_start"});
    s.feed_length = number_or(ins, "feed_length", ctx, s.feed_length);
    s.feed_speed = number_or(ins, "feed_speed", ctx, s.feed_speed);
    s.feed_start = number_or(ins, "feed_start", ctx, s.feed_start);
  }

  if (j.contains("timing")) {
    const json& t = j.at("timing");
    const std::string ctx = context + ".timing";
    check_keys(t, ctx,
               {"ts", "horizon", "warmup_duration", "run_duration", "metrics_settle"});
    s.ts = number_or(t, "ts", ctx, s.ts);
    s.horizon = int_or(t, "horizon", ctx, s.horizon);
    s.warmup_duration = number_or(t, "warmup_duration", ctx, s.warmup_duration);
    s.run_duration = number_or(t, "run_duration", ctx, s.run_duration);
    s.metrics_settle = number_or(t, "metrics_settle", ctx, s.metrics_settle);
  }

  if (j.contains("breathing")) {
    const json& b = j.at("breathing");
    const std::string ctx = context + ".breathing";
    check_keys(b, ctx, {"channels"});
    if (!b.contains("channels") || !b.at("channels").is_array() ||
        b.at("channels").size() != kChannels) {
      throw ParseError(ctx + ": expected 6 channel objects");
    }
    for (int c = 0; c < kChannels; ++c) {
      const json& ch = b.at("channels").at(static_cast<std::size_t>(c));
      const std::string cctx = ctx + ".channels[" + std::to_string(c) + "]";
      check_keys(ch, cctx,
                 {"amplitude", "period", "mod_depth", "mod_period", "phase", "drift"});
      auto& out = s.breathing.channels[static_cast<std::size_t>(c)];
      out.amplitude = number_or(ch, "amplitude", cctx, 0.0);
      out.period = number_or(ch, "period", cctx, 4.0);
      out.mod_depth = number_or(ch, "mod_depth", cctx, 0.0);
      out.mod_period = number_or(ch, "mod_period", cctx, 30.0);
      out.phase = number_or(ch, "phase", cctx, 0.0);
      out.drift = number_or(ch, "drift", cctx, 0.0);
    }
  }

  if (j.contains("sensor")) {
    const json& sen = j.at("sensor");
    const std::string ctx = context + ".sensor";
    check_keys(sen, ctx,
               {"rate_hz", "noise_sigma", "dropout_prob", "dropout_mean_burst",
                "forced_dropout_start", "forced_dropout_duration"});
    s.sensor.rate_hz = number_or(sen, "rate_hz", ctx, s.sensor.rate_hz);
    s.sensor.noise_sigma = vector_or<Vector6d>(sen, "noise_sigma", ctx, kChannels,
                                               s.sensor.noise_sigma);
    s.sensor.dropout_prob = number_or(sen, "dropout_prob", ctx, s.sensor.dropout_prob);
    s.sensor.dropout_mean_burst =
        number_or(sen, "dropout_mean_burst", ctx, s.sensor.dropout_mean_burst);
    s.sensor.forced_dropout_start =
        number_or(sen, "forced_dropout_start", ctx, s.sensor.forced_dropout_start);
    s.sensor.forced_dropout_duration =
        number_or(sen, "forced_dropout_duration", ctx, s.sensor.forced_dropout_duration);
  }

  if (j.contains("gp")) {
    const json& g = j.at("gp");
    const std::string ctx = context + ".gp";
    check_keys(g, ctx,
               {"kernel", "n_starts", "train_noise", "fit_window", "variance_thresholds",
                "max_iterations"});
    if (g.contains("kernel")) {
      s.gp.kernel_family = kernel_from_json(g.at("kernel"), ctx + ".kernel");
    }
    s.gp.hyper.n_starts = int_or(g, "n_starts", ctx, s.gp.hyper.n_starts);
    s.gp.hyper.train_noise = bool_or(g, "train_noise", ctx, s.gp.hyper.train_noise);
    s.gp.hyper.max_iterations =
        int_or(g, "max_iterations", ctx, s.gp.hyper.max_iterations);
    s.gp.fit_window = int_or(g, "fit_window", ctx, s.gp.fit_window);
    s.gp.variance_thresholds = vector_or<Vector6d>(g, "variance_thresholds", ctx,
                                                   kChannels, s.gp.variance_thresholds);
  }

  if (j.contains("ik")) {
    const json& ik = j.at("ik");
    const std::string ctx = context + ".ik";
    check_keys(ik, ctx, {"gain", "damping"});
    s.ik.gain = vector_or<Vector6d>(ik, "gain", ctx, kChannels, s.ik.gain);
    s.ik.damping = number_or(ik, "damping", ctx, s.ik.damping);
  }
  s.ik.dt = s.ts;

  if (j.contains("mpc")) {
    const json& m = j.at("mpc");
    const std::string ctx = context + ".mpc";
    check_keys(m, ctx, {"q_weights", "r_weights", "terminal_weights", "bounds"});
    s.weights.q = vector_or<Vector14d>(m, "q_weights", ctx, kStates, s.weights.q);
    s.weights.r = vector_or<Vector7d>(m, "r_weights", ctx, kJoints, s.weights.r);
    s.weights.q_terminal =
        vector_or<Vector14d>(m, "terminal_weights", ctx, kStates, s.weights.q_terminal);
    if (m.contains("bounds")) {
      const json& b = m.at("bounds");
      const std::string bctx = ctx + ".bounds";
      check_keys(b, bctx, {"q_min", "q_max", "qd_min", "qd_max", "u_min", "u_max"});
      s.bounds.q_min = vector_or<Vector7d>(b, "q_min", bctx, kJoints, s.bounds.q_min);
      s.bounds.q_max = vector_or<Vector7d>(b, "q_max", bctx, kJoints, s.bounds.q_max);
      s.bounds.qd_min = vector_or<Vector7d>(b, "qd_min", bctx, kJoints, s.bounds.qd_min);
      s.bounds.qd_max = vector_or<Vector7d>(b, "qd_max", bctx, kJoints, s.bounds.qd_max);
      s.bounds.u_min = vector_or<Vector7d>(b, "u_min", bctx, kJoints, s.bounds.u_min);
      s.bounds.u_max = vector_or<Vector7d>(b, "u_max", bctx, kJoints, s.bounds.u_max);
    }
  }

  if (j.contains("disturbance")) {
    const json& d = j.at("disturbance");
    const std::string ctx = context + ".disturbance";
    check_keys(d, ctx, {"amplitude"});
    s.disturbance.amplitude = number_or(d, "amplitude", ctx, 0.0);
  }

  if (j.contains("seeds")) {
    const json& seeds = j.at("seeds");
    const std::string ctx = context + ".seeds";
    check_keys(seeds, ctx, {"sensor", "hyper", "disturbance"});
    s.sensor.seed = uint_or(seeds, "sensor", ctx, s.sensor.seed);
    s.gp.hyper.seed = uint_or(seeds, "hyper", ctx, s.gp.hyper.seed);
    s.disturbance.seed = uint_or(seeds, "disturbance", ctx, s.disturbance.seed);
  }

  if (j.contains("output")) {
    const json& out = j.at("output");
    const std::string ctx = context + ".output";
    check_keys(out, ctx, {"log_csv", "metrics_json", "plots", "horizon_snapshot_stride"});
    if (out.contains("log_csv")) cfg.log_csv = out.at("log_csv").get<std::string>();
    if (out.contains("metrics_json")) {
      cfg.metrics_json = out.at("metrics_json").get<std::string>();
    }
    if (out.contains("plots")) {
      if (!out.at("plots").is_array()) throw ParseError(ctx + ".plots: expected an array");
      cfg.plots.clear();
      for (const auto& p : out.at("plots")) {
        const std::string name = p.get<std::string>();
        if (name != "gp_error" && name != "pose" && name != "pose_error") {
          throw ParseError(ctx + ".plots: unknown plot '" + name + "'");
        }
        cfg.plots.push_back(name);
      }
    }
    cfg.horizon_snapshot_stride =
        int_or(out, "horizon_snapshot_stride", ctx, cfg.horizon_snapshot_stride);
  }

  if (j.contains("assert")) {
    const json& a = j.at("assert");
    const std::string ctx = context + ".assert";
    check_keys(a, ctx,
               {"max_pos_err_mm", "max_ang_err_deg", "rms_pos_err_mm", "rms_ang_err_deg",
                "max_onestep_pos_mm", "max_onestep_ang_deg"});
    for (const auto& item : a.items()) {
      cfg.assertions[item.key()] = get_number(item.value(), ctx + "." + item.key());
    }
  }

  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_scenario(j, path);
}

ref::ChannelModels HyperparameterFile::models() const {
  if (channels.size() != kChannels) {
    throw ContractViolation("hyperparameter file must hold exactly six channels");
  }
  return ref::ChannelModels{
      ref::ChannelModel{channels[0].kernel, channels[0].noise_var},
      ref::ChannelModel{channels[1].kernel, channels[1].noise_var},
      ref::ChannelModel{channels[2].kernel, channels[2].noise_var},
      ref::ChannelModel{channels[3].kernel, channels[3].noise_var},
      ref::ChannelModel{channels[4].kernel, channels[4].noise_var},
      ref::ChannelModel{channels[5].kernel, channels[5].noise_var}};
}

void save_hyperparameters(const std::string& path, const HyperparameterFile& file) {
  if (file.channels.size() != kChannels) {
    throw ContractViolation("hyperparameter file must hold exactly six channels");
  }
  json j;
  j["channels"] = json::array();
  for (const auto& ch : file.channels) {
    json c;
    c["kernel"] = kernel_to_json(ch.kernel);
    c["log_hyperparameters"] = json::array();
    const Eigen::VectorXd params = ch.kernel.log_params();
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      c["log_hyperparameters"].push_back(params[i]);
    }
    c["noise_var"] = ch.noise_var;
    c["mll"] = ch.mll;
    c["window_digest"] = ch.window_digest;
    j["channels"].push_back(std::move(c));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

HyperparameterFile load_hyperparameters(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open hyperparameter file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  check_keys(j, path, {"channels"});
  if (!j.contains("channels") || !j.at("channels").is_array() ||
      j.at("channels").size() != kChannels) {
    throw ParseError(path + ": expected exactly 6 channels");
  }
  HyperparameterFile file;
  for (int c = 0; c < kChannels; ++c) {
    const json& jc = j.at("channels").at(static_cast<std::size_t>(c));
    const std::string ctx = path + ".channels[" + std::to_string(c) + "]";
    check_keys(jc, ctx,
               {"kernel", "log_hyperparameters", "noise_var", "mll", "window_digest"});
    HyperparameterFile::Channel ch{kernel_from_json(jc.at("kernel"), ctx + ".kernel"),
                                   number_or(jc, "noise_var", ctx, 0.0),
                                   number_or(jc, "mll", ctx, 0.0),
                                   jc.contains("window_digest")
                                       ? jc.at("window_digest").get<std::string>()
                                       : ""};
    if (!(ch.noise_var >= 0.0) || !std::isfinite(ch.noise_var)) {
      throw ParseError(ctx + ": noise_var must be finite and >= 0");
    }
    file.channels.push_back(std::move(ch));
  }
  return file;
}

std::string window_digest(const Eigen::VectorXd& times, const Matrix6Xd& pose) {
  std::uint64_t hash = 1469598103934665603ull;
  auto mix = [&hash](double value) {
    std::uint64_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      hash ^= (bits >> (8 * b)) & 0xffu;
      hash *= 1099511628211ull;
    }
  };
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    mix(times[i]);
    for (int c = 0; c < kChannels; ++c) mix(pose(c, i));
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(hash));
  return buffer;
}

nlohmann::json metrics_to_json(const sim::Metrics& m) {
  const double rad2deg = deg_per_rad();
  json j;
  j["tracking"] = {{"max_pos_err_mm", m.max_pos_err * kMmPerM},
                   {"rms_pos_err_mm", m.rms_pos_err * kMmPerM},
                   {"max_ang_err_deg", m.max_ang_err * rad2deg},
                   {"rms_ang_err_deg", m.rms_ang_err * rad2deg}};
  json rms = json::array(), max = json::array();
  for (int c = 0; c < kChannels; ++c) {
    const double scale = c < 3 ? kMmPerM : rad2deg;
    rms.push_back(m.onestep_rms[c] * scale);
    max.push_back(m.onestep_max[c] * scale);
  }
  j["gp_onestep"] = {{"rms_mm_or_deg", rms}, {"max_mm_or_deg", max}};
  j["solver"] = {{"mean_iterations", m.mean_solver_iterations},
                 {"max_iterations", m.max_solver_iterations}};
  j["dropout_count"] = m.dropout_count;
  j["ticks"] = m.ticks;
  j["settle_time_s"] = m.settle_time;
  return j;
}

std::vector<std::string> check_assertions(const sim::Metrics& m,
                                          const std::map<std::string, double>& assertions) {
  const double rad2deg = deg_per_rad();
  const double onestep_pos_max =
      m.onestep_max.head<3>().maxCoeff() * kMmPerM;
  const double onestep_ang_max = m.onestep_max.tail<3>().maxCoeff() * rad2deg;
  std::vector<std::string> violated;
  for (const auto& [key, bound] : assertions) {
    double value = 0.0;
    if (key == "max_pos_err_mm") {
      value = m.max_pos_err * kMmPerM;
    } else if (key == "rms_pos_err_mm") {
      value = m.rms_pos_err * kMmPerM;
    } else if (key == "max_ang_err_deg") {
      value = m.max_ang_err * rad2deg;
    } else if (key == "rms_ang_err_deg") {
      value = m.rms_ang_err * rad2deg;
    } else if (key == "max_onestep_pos_mm") {
      value = onestep_pos_max;
    } else if (key == "max_onestep_ang_deg") {
      value = onestep_ang_max;
    } else {
      throw ParseError("unknown assertion key '" + key + "'");
    }
    if (!(value <= bound)) violated.push_back(key);
  }
  return violated;
}

}  // namespace gptrack::io
