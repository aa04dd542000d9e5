#include "gcbf/io/formats.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "gcbf/error.hpp"

namespace gcbf::io {

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string metrics_csv(const std::vector<eval::Metrics>& rows) {
  std::ostringstream os;
  os << "env,controller,n_agents,area,n_obstacles,episode_length,instances,seeds,density,"
        "safety,reach,success,safety_std,reach_std,success_std\n";
  for (const auto& m : rows) {
    os << dyn::env_name(m.env) << ',' << eval::controller_name(m.controller) << ',' << m.n_agents << ','
       << format_double(m.area) << ',' << m.n_obstacles << ',' << m.episode_length << ',' << m.instances << ','
       << m.seeds << ',' << format_double(m.density) << ',' << format_double(m.safety) << ','
       << format_double(m.reach) << ',' << format_double(m.success) << ',' << format_double(m.safety_std) << ','
       << format_double(m.reach_std) << ',' << format_double(m.success_std) << '\n';
  }
  return os.str();
}

std::string loss_csv(const std::vector<train::StepRecord>& curve) {
  std::ostringstream os;
  os << "step,total,deriv,safe,unsafe,ctrl,samples,n_safe,n_unsafe,d_c,d_a,unlabeled,relaxed_targets\n";
  for (const auto& r : curve) {
    const auto& l = r.loss;
    os << r.step << ',' << format_double(l.total) << ',' << format_double(l.deriv) << ',' << format_double(l.safe)
       << ',' << format_double(l.unsafe) << ',' << format_double(l.ctrl) << ',' << l.samples << ',' << l.n_safe
       << ',' << l.n_unsafe << ',' << r.d_c << ',' << r.d_a << ',' << r.unlabeled << ',' << r.relaxed_targets
       << '\n';
  }
  return os.str();
}

std::string timing_csv(const std::vector<train::StepRecord>& curve) {
  std::ostringstream os;
  os << "step,wall_seconds\n";
  for (const auto& r : curve) os << r.step << ',' << format_double(r.wall_seconds) << '\n';
  return os.str();
}

std::string sweep_csv(const std::vector<eval::SweepCell>& cells) {
  std::ostringstream os;
  os << "alpha,horizon,final_loss,safety,reach,success,safety_std,reach_std,success_std\n";
  for (const auto& c : cells) {
    const auto& m = c.metrics;
    os << format_double(c.point.alpha) << ',' << c.point.horizon << ',' << format_double(c.final_loss) << ','
       << format_double(m.safety) << ',' << format_double(m.reach) << ',' << format_double(m.success) << ','
       << format_double(m.safety_std) << ',' << format_double(m.reach_std) << ',' << format_double(m.success_std)
       << '\n';
  }
  return os.str();
}

std::string scaling_timing_csv(const std::vector<eval::ScalingPoint>& points) {
  std::ostringstream os;
  os << "n_agents,density,wall_seconds\n";
  for (const auto& p : points) {
    os << p.metrics.n_agents << ',' << format_double(p.metrics.density) << ',' << format_double(p.wall_seconds)
       << '\n';
  }
  return os.str();
}

namespace {

nlohmann::json event_json(const char* kind, const eval::AuditEvent& e) {
  return {{"kind", kind}, {"step", e.step}, {"i", e.i}, {"j", e.j}, {"value", e.value}};
}

}  // namespace

std::string theorem1_jsonl(const std::vector<eval::Theorem1Report>& reports) {
  std::ostringstream os;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    nlohmann::json s = {{"kind", "summary"},
                        {"instance", k},
                        {"start_in_set", r.start_in_set},
                        {"checked", r.checked},
                        {"derivative_violations", r.derivative_violation_count},
                        {"negativity", r.negativity_count},
                        {"collisions", r.collision_count},
                        {"consistent", r.consistent()}};
    os << s.dump() << '\n';
    for (const auto& e : r.derivative_violations) {
      auto j = event_json("derivative_violation", e);
      j["instance"] = k;
      os << j.dump() << '\n';
    }
    for (const auto& e : r.negativity) {
      auto j = event_json("negativity", e);
      j["instance"] = k;
      os << j.dump() << '\n';
    }
    for (const auto& e : r.collisions) {
      auto j = event_json("collision", e);
      j["instance"] = k;
      os << j.dump() << '\n';
    }
  }
  return os.str();
}

std::string assumption1_jsonl(const eval::Assumption1Report& rep, double sense_radius) {
  std::ostringstream os;
  nlohmann::json s = {{"kind", "summary"},
                      {"sense_radius", sense_radius},
                      {"samples", rep.samples.size()},
                      {"mean_weight_0.4R_0.5R", rep.mean_mid},
                      {"n_0.4R_0.5R", rep.n_mid},
                      {"mean_weight_0.9R_R", rep.mean_edge},
                      {"n_0.9R_R", rep.n_edge},
                      {"decay_holds", rep.decay_holds()},
                      {"probes", rep.probes},
                      {"locality_failures", rep.locality_failures},
                      {"locality_holds", rep.locality_holds()}};
  os << s.dump() << '\n';
  for (const auto& a : rep.samples) {
    os << nlohmann::json{{"kind", "attention"}, {"d_over_R", a.distance}, {"w", a.weight}}.dump() << '\n';
  }
  return os.str();
}

std::string outcomes_jsonl(const std::vector<eval::InstanceOutcome>& outcomes) {
  std::ostringstream os;
  for (const auto& o : outcomes) {
    nlohmann::json j = {{"seed", o.seed},
                        {"instance", o.instance},
                        {"safe", std::vector<bool>(o.safe)},
                        {"reached", std::vector<bool>(o.reached)},
                        {"first_unsafe_step", o.first_unsafe_step}};
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace gcbf::io
