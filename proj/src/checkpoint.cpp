#include "soad/checkpoint.hpp"

#include "soad/container.hpp"
#include "soad/dataset.hpp"
#include "soad/errors.hpp"

namespace soad {

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"channels", c.channels}, {"window_length", c.window_length}, {"hidden", c.hidden},
          {"depth", c.depth},       {"embedding", c.embedding},         {"kernel", c.kernel},
          {"sites", c.sites}, {"spatial_kernel", c.spatial_kernel},
          {"output", to_string(c.output)}, {"schedule", to_string(c.schedule)}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.channels = j.at("channels").get<Index>();
  c.window_length = j.at("window_length").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.depth = j.at("depth").get<Index>();
  c.embedding = j.at("embedding").get<Index>();
  c.kernel = j.at("kernel").get<Index>();
  c.sites = j.value("sites", Index{1});
  c.spatial_kernel = j.value("spatial_kernel", c.spatial_kernel);
  c.output = parse_network_output(j.value("output", std::string("epsilon")));
  c.schedule = parse_schedule_kind(j.value("schedule", std::string("vp-cosine")));
  return c;
}

nlohmann::json to_json(const ObservationOperator& op) {
  nlohmann::json j{{"kind", to_string(op.kind)}};
  if (op.kind == ObservationKind::Vort2Vel) {
    j["scale"] = op.scale;
    j["input_stats"] = to_json(op.input_stats);
    const auto& q = op.qg;
    j["qg"] = {{"grid", q.grid}, {"domain", q.domain}, {"r_ek", q.r_ek}, {"filter_factor", q.filter_factor},
               {"g", q.g},       {"beta", q.beta},     {"rd", q.rd},     {"H1", q.H1},
               {"H2", q.H2},     {"U1", q.U1},         {"U2", q.U2},     {"dt", q.dt}};
  }
  return j;
}

ObservationOperator operator_from_json(const nlohmann::json& j) {
  const auto kind = parse_observation_kind(j.at("kind").get<std::string>());
  switch (kind) {
    case ObservationKind::Identity: return ObservationOperator::identity();
    case ObservationKind::ArctanEasy: return ObservationOperator::arctan_easy();
    case ObservationKind::SinHard: return ObservationOperator::sin_hard();
    case ObservationKind::Vort2Vel: break;
  }
  QGConfig q;
  const auto& g = j.at("qg");
  q.grid = g.at("grid").get<Index>();
  q.domain = g.at("domain");
  q.r_ek = g.at("r_ek");
  q.filter_factor = g.at("filter_factor");
  q.g = g.at("g");
  q.beta = g.at("beta");
  q.rd = g.at("rd");
  q.H1 = g.at("H1");
  q.H2 = g.at("H2");
  q.U1 = g.at("U1");
  q.U2 = g.at("U2");
  q.dt = g.at("dt");
  return ObservationOperator::vort2vel(q, j.at("scale").get<std::array<double, 4>>(),
                                       stats_from_json(j.at("input_stats")));
}

void quantize_parameters(WindowDenoiser& denoiser) {
  for (auto& p : denoiser.parameters()) p.value = p.value.cast<float>().cast<double>();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Container c;
  c.magic = kCheckpointMagic;
  c.header["architecture"] = to_json(ck.denoiser.config());
  c.header["schedule"] = {{"kind", to_string(ck.schedule.kind())},
                          {"t_min", ck.schedule.t_min()},
                          {"t_max", ck.schedule.t_max()}};
  c.header["layout"] = to_json(ck.layout);
  c.header["stats"] = to_json(ck.stats);
  c.header["operators"] = nlohmann::json::array();
  for (const auto& op : ck.operators) c.header["operators"].push_back(to_json(op));
  c.header["training"] = ck.training;
  for (const auto& p : ck.denoiser.parameters()) {
    Tensor t{p.name, {static_cast<std::uint64_t>(p.value.rows()), static_cast<std::uint64_t>(p.value.cols())}, {}};
    t.data.resize(static_cast<std::size_t>(p.value.size()));
    // Row-major on disk.
    for (Index r = 0; r < p.value.rows(); ++r)
      for (Index col = 0; col < p.value.cols(); ++col)
        t.data[static_cast<std::size_t>(r * p.value.cols() + col)] = static_cast<float>(p.value(r, col));
    c.tensors.push_back(std::move(t));
  }
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path, kCheckpointMagic);
  try {
    const auto& h = c.header;
    WindowDenoiser net(network_config_from_json(h.at("architecture")), 0);
    for (auto& p : net.parameters()) {
      const Tensor& t = c.tensor(p.name);
      if (t.shape.size() != 2 || t.shape[0] != static_cast<std::uint64_t>(p.value.rows()) ||
          t.shape[1] != static_cast<std::uint64_t>(p.value.cols()))
        throw FormatError("checkpoint tensor " + p.name + " has the wrong shape");
      for (Index r = 0; r < p.value.rows(); ++r)
        for (Index col = 0; col < p.value.cols(); ++col)
          p.value(r, col) = t.data[static_cast<std::size_t>(r * p.value.cols() + col)];
    }
    const auto& s = h.at("schedule");
    Checkpoint ck{std::move(net),
                  NoiseSchedule(parse_schedule_kind(s.at("kind").get<std::string>()), s.at("t_min"), s.at("t_max")),
                  layout_from_json(h.at("layout")),
                  stats_from_json(h.at("stats")),
                  {},
                  h.value("training", nlohmann::json::object())};
    for (const auto& op : h.at("operators")) ck.operators.push_back(operator_from_json(op));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
}

}  // namespace soad
