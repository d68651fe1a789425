#include "gridloop/scenario.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& required,
                  const std::set<std::string>& optional = {}) {
    if (!obj.is_object()) throw Error::schema(where + " must be an object");
    for (const auto& item : obj.items()) {
        if (!required.count(item.key()) && !optional.count(item.key()))
            throw Error::schema(where + ": unknown key '" + item.key() + "'");
    }
    for (const std::string& key : required) {
        if (!obj.contains(key))
            throw Error::schema(where + ": missing required key '" + key + "'");
    }
}

double get_number(const json& obj, const std::string& where, const std::string& key) {
    const json& v = obj.at(key);
    if (!v.is_number()) throw Error::schema(where + "." + key + " must be a number");
    return v.get<double>();
}

Vec get_vector(const json& v, const std::string& where) {
    if (!v.is_array()) throw Error::schema(where + " must be an array of numbers");
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw Error::schema(where + " must contain only numbers");
        out[i] = v[i].get<double>();
    }
    return out;
}

/// Complex block from {"re": ..., "im": ...}; scalars mean a 1x1 block.
CMat get_complex_block(const json& v, const std::string& where) {
    require_keys(v, where, {"re", "im"});
    const json& re = v.at("re");
    const json& im = v.at("im");
    if (re.is_number() && im.is_number()) {
        CMat block(1, 1);
        block(0, 0) = Complex(re.get<double>(), im.get<double>());
        return block;
    }
    if (!re.is_array() || !im.is_array())
        throw Error::schema(where + ": re/im must both be numbers or nested arrays");
    auto rows = re.size();
    if (im.size() != rows) throw Error::schema(where + ": re/im shape mismatch");
    if (rows == 0) throw Error::schema(where + ": empty block");
    if (re[0].is_number())
        throw Error::schema(where + ": block arrays must be 2-D ([[..],..])");
    auto cols = re[0].size();
    CMat block(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!re[i].is_array() || !im[i].is_array() || re[i].size() != cols ||
            im[i].size() != cols)
            throw Error::schema(where + ": ragged block");
        for (std::size_t j = 0; j < cols; ++j)
            block(i, j) = Complex(re[i][j].get<double>(), im[i][j].get<double>());
    }
    return block;
}

CVec get_complex_vector(const json& v, const std::string& where) {
    require_keys(v, where, {"re", "im"});
    const json& re = v.at("re");
    const json& im = v.at("im");
    if (re.is_number() && im.is_number()) {
        CVec out(1);
        out[0] = Complex(re.get<double>(), im.get<double>());
        return out;
    }
    if (!re.is_array() || !im.is_array() || re.size() != im.size())
        throw Error::schema(where + ": re/im must be equal-length arrays");
    CVec out(re.size());
    for (std::size_t i = 0; i < re.size(); ++i)
        out[i] = Complex(re[i].get<double>(), im[i].get<double>());
    return out;
}

BusRole parse_role(const std::string& role, const std::string& where) {
    if (role == "slack") return BusRole::Slack;
    if (role == "load") return BusRole::Load;
    if (role == "controllable") return BusRole::Controllable;
    throw Error::schema(where + ": unknown bus role '" + role + "'");
}

SensorKind parse_kind(const std::string& kind, const std::string& where) {
    if (kind == "voltage-phasor") return SensorKind::VoltagePhasor;
    if (kind == "voltage-magnitude") return SensorKind::VoltageMagnitude;
    if (kind == "state-subset") return SensorKind::StateSubset;
    if (kind == "pseudo-load") return SensorKind::PseudoLoad;
    throw Error::schema(where + ": unknown sensor kind '" + kind + "'");
}

const char* role_name(BusRole r) {
    switch (r) {
        case BusRole::Slack: return "slack";
        case BusRole::Load: return "load";
        case BusRole::Controllable: return "controllable";
    }
    return "?";
}

const char* kind_name(SensorKind k) {
    switch (k) {
        case SensorKind::VoltagePhasor: return "voltage-phasor";
        case SensorKind::VoltageMagnitude: return "voltage-magnitude";
        case SensorKind::StateSubset: return "state-subset";
        case SensorKind::PseudoLoad: return "pseudo-load";
    }
    return "?";
}

json block_to_json(const CMat& block) {
    json re = json::array();
    json im = json::array();
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
        json rrow = json::array();
        json irow = json::array();
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
            rrow.push_back(block(i, j).real());
            irow.push_back(block(i, j).imag());
        }
        re.push_back(rrow);
        im.push_back(irow);
    }
    return json{{"re", re}, {"im", im}};
}

json vec_to_json(const Vec& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Scenario build_from_json(const json& doc) {
    require_keys(doc, "scenario",
                 {"schema_version", "name", "grid", "sensors", "objective", "feasible_set",
                  "load_process", "simulation"});

    Scenario sc;
    sc.schema_version = doc.at("schema_version").get<std::string>();
    {
        const std::string major = sc.schema_version.substr(0, sc.schema_version.find('.'));
        const std::string expected(kSchemaVersion);
        if (major != expected.substr(0, expected.find('.')))
            throw Error::schema("unsupported schema_version '" + sc.schema_version +
                                "' (supported major: " + expected + ")");
    }
    sc.name = doc.at("name").get<std::string>();

    // --- grid ---
    const json& jgrid = doc.at("grid");
    require_keys(jgrid, "grid", {"buses", "branches", "slack_voltage"}, {"shunts"});
    std::vector<Bus> buses;
    for (std::size_t i = 0; i < jgrid.at("buses").size(); ++i) {
        const json& jb = jgrid.at("buses")[i];
        const std::string where = "grid.buses[" + std::to_string(i) + "]";
        require_keys(jb, where, {"id", "role"}, {"phases"});
        Bus b;
        b.id = jb.at("id").get<int>();
        b.phases = jb.contains("phases") ? jb.at("phases").get<int>() : 1;
        b.role = parse_role(jb.at("role").get<std::string>(), where);
        buses.push_back(b);
    }
    std::vector<Branch> branches;
    for (std::size_t i = 0; i < jgrid.at("branches").size(); ++i) {
        const json& jb = jgrid.at("branches")[i];
        const std::string where = "grid.branches[" + std::to_string(i) + "]";
        require_keys(jb, where, {"from", "to", "admittance"});
        Branch br;
        br.from = jb.at("from").get<int>();
        br.to = jb.at("to").get<int>();
        br.admittance = get_complex_block(jb.at("admittance"), where + ".admittance");
        branches.push_back(br);
    }
    std::vector<Shunt> shunts;
    if (jgrid.contains("shunts")) {
        for (std::size_t i = 0; i < jgrid.at("shunts").size(); ++i) {
            const json& js = jgrid.at("shunts")[i];
            const std::string where = "grid.shunts[" + std::to_string(i) + "]";
            require_keys(js, where, {"bus", "admittance"});
            Shunt sh;
            sh.bus = js.at("bus").get<int>();
            sh.admittance = get_complex_block(js.at("admittance"), where + ".admittance");
            shunts.push_back(sh);
        }
    }
    const CVec u_pcc = get_complex_vector(jgrid.at("slack_voltage"), "grid.slack_voltage");
    sc.grid = build_admittance(std::move(buses), std::move(branches), u_pcc, std::move(shunts));

    const CVec u0 = no_load_voltage(sc.grid);
    sc.lin = linearize(sc.grid, u0);

    // --- sensors ---
    for (std::size_t i = 0; i < doc.at("sensors").size(); ++i) {
        const json& js = doc.at("sensors")[i];
        const std::string where = "sensors[" + std::to_string(i) + "]";
        require_keys(js, where, {"kind", "targets", "sigma"});
        SensorSpec spec;
        spec.kind = parse_kind(js.at("kind").get<std::string>(), where);
        for (const json& t : js.at("targets")) spec.targets.push_back(t.get<int>());
        spec.sigma = get_number(js, where, "sigma");
        sc.sensors.push_back(spec);
    }

    // --- objective ---
    const json& jobj = doc.at("objective");
    require_keys(jobj, "objective", {"p_target", "rho", "v_min", "v_max"}, {"eta", "l_f"});
    sc.objective.p_target = get_vector(jobj.at("p_target"), "objective.p_target");
    sc.objective.rho = get_number(jobj, "objective", "rho");
    sc.objective.v_min = get_number(jobj, "objective", "v_min");
    sc.objective.v_max = get_number(jobj, "objective", "v_max");
    sc.objective.eta = jobj.contains("eta") ? jobj.at("eta").get<double>() : 1.0;
    sc.objective.l_f = jobj.contains("l_f") ? jobj.at("l_f").get<double>() : 1.0;
    sc.objective.l_g = sc.objective.rho;

    // --- feasible set ---
    const json& jfs = doc.at("feasible_set");
    require_keys(jfs, "feasible_set", {"lower", "upper"});
    sc.feasible.lower = get_vector(jfs.at("lower"), "feasible_set.lower");
    sc.feasible.upper = get_vector(jfs.at("upper"), "feasible_set.upper");

    // --- load process ---
    const json& jlp = doc.at("load_process");
    require_keys(jlp, "load_process", {"base", "step_std"}, {"sigma_l_floor"});
    sc.loads.base = get_vector(jlp.at("base"), "load_process.base");
    if (jlp.at("step_std").is_number()) {
        sc.loads.step_std =
            Vec::Constant(sc.loads.base.size(), jlp.at("step_std").get<double>());
    } else {
        sc.loads.step_std = get_vector(jlp.at("step_std"), "load_process.step_std");
    }
    if (jlp.contains("sigma_l_floor"))
        sc.sigma_l_floor = jlp.at("sigma_l_floor").get<double>();

    // --- simulation ---
    const json& jsim = doc.at("simulation");
    require_keys(jsim, "simulation", {"eps", "horizon", "seed"},
                 {"plant", "ensemble_size", "p0_variance", "allow_eps_above_max"});
    sc.eps = get_number(jsim, "simulation", "eps");
    sc.horizon = jsim.at("horizon").get<long>();
    sc.seed = jsim.at("seed").get<std::uint64_t>();
    if (jsim.contains("plant")) {
        const std::string plant = jsim.at("plant").get<std::string>();
        if (plant == "linear")
            sc.plant = PlantMode::Linear;
        else if (plant == "nonlinear")
            sc.plant = PlantMode::Nonlinear;
        else
            throw Error::schema("simulation.plant must be 'linear' or 'nonlinear'");
    }
    if (jsim.contains("ensemble_size")) sc.ensemble_size = jsim.at("ensemble_size").get<int>();
    if (jsim.contains("p0_variance")) sc.p0_variance = jsim.at("p0_variance").get<double>();
    if (jsim.contains("allow_eps_above_max"))
        sc.allow_eps_above_max = jsim.at("allow_eps_above_max").get<bool>();

    // Physics-level construction; throws on rank deficiency.
    sc.meas = build_measurement_model(sc.sensors, sc.lin, sc.loads.base);

    sc.validate();
    return sc;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error::schema(origin + ": " + e.what());
    }
    try {
        return build_from_json(doc);
    } catch (const json::exception& e) {
        throw Error::schema(origin + ": " + e.what());
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::schema("cannot open scenario file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str(), path);
}

std::string scenario_to_json(const Scenario& sc) {
    json doc;
    doc["schema_version"] = sc.schema_version;
    doc["name"] = sc.name;

    json jbuses = json::array();
    for (const Bus& b : sc.grid.buses)
        jbuses.push_back({{"id", b.id}, {"phases", b.phases}, {"role", role_name(b.role)}});
    json jbranches = json::array();
    for (const Branch& br : sc.grid.branches)
        jbranches.push_back(
            {{"from", br.from}, {"to", br.to}, {"admittance", block_to_json(br.admittance)}});
    json jgrid = {{"buses", jbuses},
                  {"branches", jbranches},
                  {"slack_voltage",
                   json{{"re", vec_to_json(sc.grid.u_pcc.real())},
                        {"im", vec_to_json(sc.grid.u_pcc.imag())}}}};
    if (!sc.grid.shunts.empty()) {
        json jshunts = json::array();
        for (const Shunt& sh : sc.grid.shunts)
            jshunts.push_back({{"bus", sh.bus}, {"admittance", block_to_json(sh.admittance)}});
        jgrid["shunts"] = jshunts;
    }
    doc["grid"] = jgrid;

    json jsensors = json::array();
    for (const SensorSpec& s : sc.sensors) {
        json targets = json::array();
        for (int t : s.targets) targets.push_back(t);
        jsensors.push_back({{"kind", kind_name(s.kind)}, {"targets", targets}, {"sigma", s.sigma}});
    }
    doc["sensors"] = jsensors;

    doc["objective"] = {{"p_target", vec_to_json(sc.objective.p_target)},
                        {"rho", sc.objective.rho},
                        {"v_min", sc.objective.v_min},
                        {"v_max", sc.objective.v_max},
                        {"eta", sc.objective.eta},
                        {"l_f", sc.objective.l_f}};
    doc["feasible_set"] = {{"lower", vec_to_json(sc.feasible.lower)},
                           {"upper", vec_to_json(sc.feasible.upper)}};
    doc["load_process"] = {{"base", vec_to_json(sc.loads.base)},
                           {"step_std", vec_to_json(sc.loads.step_std)},
                           {"sigma_l_floor", sc.sigma_l_floor}};
    doc["simulation"] = {{"eps", sc.eps},
                         {"horizon", sc.horizon},
                         {"seed", sc.seed},
                         {"plant", sc.plant == PlantMode::Linear ? "linear" : "nonlinear"},
                         {"ensemble_size", sc.ensemble_size},
                         {"p0_variance", sc.p0_variance},
                         {"allow_eps_above_max", sc.allow_eps_above_max}};

    return doc.dump(2) + "\n";
}

}  // namespace gridloop
