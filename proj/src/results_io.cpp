#include "gridloop/results_io.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json series_to_json(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(x);
    return out;
}

json matrix_to_json(const Mat& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

std::vector<double> json_to_series(const json& v) {
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& x : v) out.push_back(x.get<double>());
    return out;
}

Mat json_to_matrix(const json& v) {
    const Eigen::Index rows = static_cast<Eigen::Index>(v.size());
    if (rows == 0) return Mat(0, 0);
    const Eigen::Index cols = static_cast<Eigen::Index>(v[0].size());
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[i][j].get<double>();
    return m;
}

json certificate_to_json(const CertificateReport& c) {
    return json{{"eta", c.eta},
                {"l_f", c.l_f},
                {"l_g", c.l_g},
                {"opnorm_bc", c.opnorm_bc},
                {"lipschitz", c.lipschitz},
                {"eps", c.eps},
                {"eps_max", c.eps_max},
                {"r_eps", c.r_eps},
                {"psi", c.psi},
                {"tau", c.tau},
                {"sigma_lo", c.sigma_lo},
                {"sigma_hi", c.sigma_hi},
                {"c_v", c.c_v},
                {"c_s", c.c_s},
                {"l_s_opt", c.l_s_opt},
                {"trace_sigma_l", c.trace_sigma_l},
                {"trace_sigma_y", c.trace_sigma_y},
                {"est_envelope", c.est_envelope},
                {"opt_envelope", c.opt_envelope},
                {"mixed_envelope", c.mixed_envelope},
                {"cond_ratio", c.cond_ratio}};
}

CertificateReport certificate_from_json(const json& j) {
    CertificateReport c;
    c.eta = j.at("eta");
    c.l_f = j.at("l_f");
    c.l_g = j.at("l_g");
    c.opnorm_bc = j.at("opnorm_bc");
    c.lipschitz = j.at("lipschitz");
    c.eps = j.at("eps");
    c.eps_max = j.at("eps_max");
    c.r_eps = j.at("r_eps");
    c.psi = j.at("psi");
    c.tau = j.at("tau");
    c.sigma_lo = j.at("sigma_lo");
    c.sigma_hi = j.at("sigma_hi");
    c.c_v = j.at("c_v");
    c.c_s = j.at("c_s");
    c.l_s_opt = j.at("l_s_opt");
    c.trace_sigma_l = j.at("trace_sigma_l");
    c.trace_sigma_y = j.at("trace_sigma_y");
    c.est_envelope = j.at("est_envelope");
    c.opt_envelope = j.at("opt_envelope");
    c.mixed_envelope = j.at("mixed_envelope");
    c.cond_ratio = j.at("cond_ratio");
    return c;
}

}  // namespace

std::string certificate_to_json_text(const CertificateReport& report) {
    return certificate_to_json(report).dump(2) + "\n";
}

std::vector<std::string> state_node_labels(const GridModel& grid) {
    std::vector<std::string> labels;
    labels.reserve(grid.n_state);
    static const char phase_letter[3] = {'a', 'b', 'c'};
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        if (static_cast<int>(i) == grid.slack_bus) continue;
        const Bus& b = grid.buses[i];
        for (int ph = 0; ph < b.phases; ++ph) {
            std::string label = std::to_string(b.id);
            if (b.phases > 1) label += phase_letter[ph];
            labels.push_back(label);
        }
    }
    return labels;
}

std::string results_to_csv(const ResultsBundle& bundle) {
    const Trajectory& t = bundle.trajectory;
    std::ostringstream os;
    os << "t,est_err_norm,opt_err_norm,norm_sc_star,norm_sc_max,penalty_g";
    const Eigen::Index n_nodes = t.volt_mag.cols();
    for (Eigen::Index i = 0; i < n_nodes; ++i) {
        os << ",vmag_";
        if (i < static_cast<Eigen::Index>(bundle.node_labels.size()))
            os << bundle.node_labels[i];
        else
            os << i;
    }
    os << "\n";
    for (long step = 0; step < t.steps(); ++step) {
        os << step << ',' << fmt17(t.est_err_norm[step]) << ',' << fmt17(t.opt_err_norm[step])
           << ',' << fmt17(t.norm_sc_star[step]) << ',' << fmt17(t.norm_sc_max[step]) << ','
           << fmt17(t.penalty[step]);
        for (Eigen::Index i = 0; i < n_nodes; ++i) os << ',' << fmt17(t.volt_mag(step, i));
        os << "\n";
    }
    return os.str();
}

std::string results_to_json_text(const ResultsBundle& bundle) {
    const Trajectory& t = bundle.trajectory;
    json doc;
    doc["schema_version"] = bundle.schema_version;
    doc["metadata"] = {{"scenario", bundle.meta.scenario_name},
                       {"seed", bundle.meta.seed},
                       {"plant", bundle.meta.plant_mode},
                       {"generator", bundle.meta.generator},
                       {"wall_time_s", bundle.meta.wall_time_s}};
    if (bundle.certificate) doc["certificate"] = certificate_to_json(*bundle.certificate);
    doc["summary"] = {{"est_tail_mean", bundle.summary.est_tail_mean},
                      {"opt_tail_mean", bundle.summary.opt_tail_mean},
                      {"est_settling", bundle.summary.est_settling},
                      {"opt_settling", bundle.summary.opt_settling},
                      {"violation_count", bundle.summary.violation_count},
                      {"max_violation_depth", bundle.summary.max_violation_depth}};
    json traj;
    traj["est_err_norm"] = series_to_json(t.est_err_norm);
    traj["opt_err_norm"] = series_to_json(t.opt_err_norm);
    traj["norm_sc_star"] = series_to_json(t.norm_sc_star);
    traj["norm_sc_max"] = series_to_json(t.norm_sc_max);
    traj["penalty_g"] = series_to_json(t.penalty);
    traj["vmag"] = matrix_to_json(t.volt_mag);
    json labels = json::array();
    for (const std::string& l : bundle.node_labels) labels.push_back(l);
    traj["node_labels"] = labels;
    doc["trajectory"] = traj;
    return doc.dump(2) + "\n";
}

void export_results(const ResultsBundle& bundle, const std::string& path,
                    ResultsFormat format) {
    std::string payload = format == ResultsFormat::TableCsv ? results_to_csv(bundle)
                                                            : results_to_json_text(bundle);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    out << payload;
    if (!out) throw Error::io("failed while writing '" + path + "'");
}

ResultsBundle load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open results file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error::schema(path + ": " + e.what());
    }
    ResultsBundle b;
    try {
        b.schema_version = doc.at("schema_version").get<std::string>();
        const std::string major = b.schema_version.substr(0, b.schema_version.find('.'));
        if (major != "1")
            throw Error::schema(path + ": unsupported results schema major '" + major + "'");
        const json& meta = doc.at("metadata");
        b.meta.scenario_name = meta.at("scenario").get<std::string>();
        b.meta.seed = meta.at("seed").get<std::uint64_t>();
        b.meta.plant_mode = meta.at("plant").get<std::string>();
        b.meta.generator = meta.at("generator").get<std::string>();
        b.meta.wall_time_s = meta.at("wall_time_s").get<double>();
        if (doc.contains("certificate"))
            b.certificate = certificate_from_json(doc.at("certificate"));
        const json& summary = doc.at("summary");
        b.summary.est_tail_mean = summary.at("est_tail_mean");
        b.summary.opt_tail_mean = summary.at("opt_tail_mean");
        b.summary.est_settling = summary.at("est_settling");
        b.summary.opt_settling = summary.at("opt_settling");
        b.summary.violation_count = summary.at("violation_count");
        b.summary.max_violation_depth = summary.at("max_violation_depth");
        const json& traj = doc.at("trajectory");
        b.trajectory.est_err_norm = json_to_series(traj.at("est_err_norm"));
        b.trajectory.opt_err_norm = json_to_series(traj.at("opt_err_norm"));
        b.trajectory.norm_sc_star = json_to_series(traj.at("norm_sc_star"));
        b.trajectory.norm_sc_max = json_to_series(traj.at("norm_sc_max"));
        b.trajectory.penalty = json_to_series(traj.at("penalty_g"));
        b.trajectory.volt_mag = json_to_matrix(traj.at("vmag"));
        for (const json& l : traj.at("node_labels"))
            b.node_labels.push_back(l.get<std::string>());
    } catch (const json::exception& e) {
        throw Error::schema(path + ": malformed results file: " + e.what());
    }
    return b;
}

}  // namespace gridloop
