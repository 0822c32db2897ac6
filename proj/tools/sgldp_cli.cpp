// sgldp: command-line driver for simulations, skeleton paths, endpoint rate
// functions, Monte Carlo sweeps and the self-check suites.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgldp/invariants.hpp"
#include "sgldp/io.hpp"
#include "sgldp/sgldp.hpp"

namespace fs = std::filesystem;
using sgldp::io::json;
using namespace sgldp;

namespace {

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Scalar overrides from the command line; unset ones leave the file value.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<double> dt;
    std::optional<double> eps;
    std::string eps_list;
    std::optional<std::uint64_t> n;
    std::vector<std::string> set;  // key=value, value parsed as JSON

    void apply(json& doc) const {
        if (seed) doc["seed"] = *seed;
        if (threads) doc["threads"] = *threads;
        if (dt) doc["dt"] = *dt;
        if (eps) doc["eps"] = *eps;
        if (n) doc["n"] = *n;
        if (!eps_list.empty()) {
            std::vector<double> v;
            std::stringstream ss(eps_list);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    v.push_back(std::stod(item));
                } catch (const std::exception&) {
                    throw ConfigError("eps_list", "cannot parse \"" + item + "\" as a number");
                }
            }
            doc["eps_list"] = v;
        }
        for (const auto& kv : set) {
            const auto pos = kv.find('=');
            if (pos == std::string::npos) throw ConfigError("set", "expected key=value, got \"" + kv + "\"");
            const std::string key = kv.substr(0, pos);
            const std::string val = kv.substr(pos + 1);
            try {
                doc[key] = json::parse(val);
            } catch (const json::exception&) {
                doc[key] = val;  // bare strings such as forcing=linear
            }
        }
    }
};

class Run {
public:
    Run(std::string command, const json& config_doc, json args, fs::path out)
        : out_(std::move(out)), started_(utc_now()) {
        cfg_ = io::config_from_json(config_doc);
        manifest_.command = std::move(command);
        manifest_.args = std::move(args);
        manifest_.config = cfg_.resolved;
        manifest_.config_hash = cfg_.hash;
        manifest_.seed = cfg_.params.seed;
        fs::create_directories(out_);
        const std::optional<fs::path> cache = manifest_.args.value("tensor_cache", std::string()).empty()
                                                  ? std::nullopt
                                                  : std::optional<fs::path>(manifest_.args.at("tensor_cache").get<std::string>());
        tensor_ = io::load_or_assemble(cfg_.model.basis, cache);
    }

    const io::ExperimentConfig& config() const { return cfg_; }
    const ModelConfig& model() const { return cfg_.model; }
    const io::ExperimentParams& params() const { return cfg_.params; }
    const TrilinearTensor& tensor() const { return tensor_; }
    const json& args() const { return manifest_.args; }

    std::ofstream open(const std::string& name, bool binary = false) {
        std::ofstream os(out_ / name, binary ? std::ios::binary : std::ios::out);
        if (!os) throw std::runtime_error("cannot write " + (out_ / name).string());
        manifest_.outputs.push_back(name);
        return os;
    }

    void write_json(const std::string& name, const json& j) { open(name) << j.dump(2) << '\n'; }

    void finish() {
        manifest_.started = started_;
        manifest_.finished = utc_now();
        std::ofstream os(out_ / "manifest.json");
        os << manifest_.to_json(cfg_.model.basis).dump(2) << '\n';
    }

    /// Event centre of the configuration, resolving "deterministic_endpoint".
    SpectralField event_center() const {
        const json& c = cfg_.params.event_center;
        if (c.value("type", std::string()) == "deterministic_endpoint") return deterministic_endpoint();
        return io::field_from_json(c, cfg_.model.basis, "event.center");
    }

    SpectralField deterministic_endpoint() const {
        const double dt = cfg_.model.T / (cfg_.params.control_steps * cfg_.params.substeps);
        return solve_deterministic(cfg_.model, tensor_, dt, 1 << 30).final_state();
    }

    RateOptions rate_options() const {
        RateOptions o;
        o.cells = cfg_.params.control_steps;
        o.substeps = cfg_.params.substeps;
        o.tol = cfg_.params.rate_tol;
        o.mu_start = cfg_.params.mu_start;
        o.mu_max = cfg_.params.mu_max;
        return o;
    }

private:
    fs::path out_;
    std::string started_;
    io::ExperimentConfig cfg_;
    TrilinearTensor tensor_;
    io::RunManifest manifest_;
};

void print_table(const std::vector<std::tuple<std::string, std::string, bool>>& rows) {
    std::size_t w = 0;
    for (const auto& r : rows) w = std::max(w, std::get<0>(r).size());
    for (const auto& [name, detail, ok] : rows) {
        std::cout << (ok ? "PASS  " : "FAIL  ") << name << std::string(w + 2 - name.size(), ' ') << detail << '\n';
    }
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// commands

int cmd_simulate(Run& run) {
    const auto& p = run.params();
    const auto& m = run.model();
    const NoiseDriver driver{p.seed, stream_id(0, 0), std::max(m.m(), 1), 1};
    Trajectory tr = solve_spde(m, run.tensor(), p.eps, nullptr, driver, p.dt, p.save_stride);
    tr.config_hash = run.config().hash;
    {
        auto os = run.open("trajectory.traj", true);
        io::write_snapshot(tr, os);
    }
    {
        auto os = run.open("norms.csv");
        io::write_norms_csv(tr, m.basis, os);
    }
    run.write_json("summary.json", {{"eps", p.eps},
                                    {"dt", p.dt},
                                    {"steps", step_count(m.T, p.dt)},
                                    {"sup_v", tr.sup_v},
                                    {"sup_w", tr.sup_w},
                                    {"final_norm_v", norm_v(tr.final_state(), m.basis)}});
    std::cout << "simulated " << tr.size() << " saved states, sup |u|_V = " << num(tr.sup_v) << '\n';
    return 0;
}

ControlPath control_from_args(const Run& run) {
    const auto& m = run.model();
    if (!run.args().contains("control")) return ControlPath::zero(m.T, run.params().control_steps, m.m());
    const auto rows = run.args().at("control").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd hd(static_cast<Eigen::Index>(rows.size()), m.m());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != static_cast<std::size_t>(m.m())) throw DimensionError("control CSV columns differ from m");
        for (int j = 0; j < m.m(); ++j) hd(static_cast<Eigen::Index>(k), j) = rows[k][static_cast<std::size_t>(j)];
    }
    return ControlPath(m.T, hd);
}

int cmd_skeleton(Run& run) {
    const auto& m = run.model();
    const ControlPath h = control_from_args(run);
    const double dt = m.T / (h.cells() * run.params().substeps);
    Trajectory tr = gamma0(h, m, run.tensor(), dt, 1);
    tr.config_hash = run.config().hash;
    {
        auto os = run.open("skeleton.traj", true);
        io::write_snapshot(tr, os);
    }
    {
        auto os = run.open("norms.csv");
        io::write_norms_csv(tr, m.basis, os);
    }
    run.write_json("summary.json", {{"cost", control_cost(h)},
                                    {"cells", h.cells()},
                                    {"dt", dt},
                                    {"sup_v", tr.sup_v},
                                    {"final_norm_v", norm_v(tr.final_state(), m.basis)}});
    std::cout << "skeleton path with cost " << num(control_cost(h)) << ", final |u|_V = "
              << num(norm_v(tr.final_state(), m.basis)) << '\n';
    return 0;
}

int cmd_rate(Run& run) {
    const auto& m = run.model();
    const SpectralField target = io::field_from_json(run.args().at("target"), m.basis, "target");
    const RateEstimate r = rate_endpoint(target, m, run.tensor(), run.rate_options());
    json j = io::rate_to_json(r);
    if (!m.nonlinear && m.forcing.forcing != ForcingFamily::Modulated &&
        m.forcing.diffusion == DiffusionFamily::Additive) {
        const double oracle = gramian_rate_linear(LinearModelSpec::from_config(m), target);
        j["gramian_oracle"] = std::isfinite(oracle) ? json(oracle) : json(nullptr);
    }
    run.write_json("rate.json", j);
    {
        auto os = run.open("control.csv");
        io::write_control_csv(r.control, os);
    }
    if (r.finite) {
        std::cout << "rate " << num(r.value) << " (endpoint gap " << num(r.endpoint_gap) << ")\n";
    } else {
        std::cout << "no finite rate found (endpoint gap stalled at " << num(r.endpoint_gap) << ")\n";
    }
    return 0;
}

// Reference rate for the ball event: exact for linear instances, otherwise the
// rate of the ball point nearest to the deterministic endpoint (an upper bound).
std::pair<double, json> ball_reference(const Run& run, const Event& ev) {
    const auto& m = run.model();
    if (!m.nonlinear && m.forcing.forcing != ForcingFamily::Modulated &&
        m.forcing.diffusion == DiffusionFamily::Additive) {
        const double I = gramian_rate_ball(LinearModelSpec::from_config(m), ev.center, ev.radius, m.basis.w_v);
        return {I, {{"method", "gramian_ball"}, {"value", std::isfinite(I) ? json(I) : json(nullptr)}}};
    }
    const SpectralField x0 = run.deterministic_endpoint();
    const double d = norm_v(x0 - ev.center, m.basis);
    if (d <= ev.radius) return {0.0, {{"method", "deterministic_endpoint_inside"}, {"value", 0.0}}};
    const SpectralField nearest = ev.center + ev.radius / d * (x0 - ev.center);
    const RateEstimate r = rate_endpoint(nearest, m, run.tensor(), run.rate_options());
    return {r.value,
            {{"method", "rate_endpoint_nearest_point"},
             {"value", r.finite ? json(r.value) : json(nullptr)},
             {"caveat", "upper bound: the nearest point need not minimise the rate over the ball"}}};
}

int cmd_sweep(Run& run) {
    const auto& p = run.params();
    const auto& m = run.model();
    const Event ev{run.event_center(), p.event_radius};
    const auto [I_ref, ref] = ball_reference(run, ev);
    EnsembleOptions o;
    o.dt = p.dt;
    o.threads = p.threads;
    const SweepResult s = ldp_sweep(m, run.tensor(), p.eps_list, ev, I_ref, p.n, p.seed, o);
    {
        auto os = run.open("sweep.csv");
        io::write_sweep_csv(s, os);
    }
    json rows = json::array();
    for (const auto& r : s.rows) {
        rows.push_back({{"eps", r.eps},
                        {"hits", r.hits},
                        {"censored", r.censored},
                        {"halfspace_bound", halfspace_probability_bound(I_ref, r.eps)}});
    }
    run.write_json("sweep.json", {{"reference", ref},
                                  {"monotone", s.monotone},
                                  {"trend_violations", s.trend_violations},
                                  {"final_rel_gap", std::isnan(s.final_rel_gap) ? json(nullptr) : json(s.final_rel_gap)},
                                  {"rows", rows}});
    for (const auto& r : s.rows) {
        std::cout << "eps " << num(r.eps) << "  hits " << r.hits << "/" << r.n << "  -eps log p "
                  << (r.censored ? std::string("censored") : num(r.neg_eps_log_p)) << "  I_ref " << num(I_ref) << '\n';
    }
    return 0;
}

int cmd_check_invariants(Run& run) {
    const auto results = run_invariant_suite(run.model(), run.tensor(), run.params().seed);
    std::vector<std::tuple<std::string, std::string, bool>> rows;
    json j = json::array();
    bool all = true;
    for (const auto& r : results) {
        rows.emplace_back(r.name, num(r.measured) + " <= " + num(r.tolerance) + (r.note.empty() ? "" : "  (" + r.note + ")"),
                          r.pass);
        j.push_back({{"name", r.name}, {"measured", r.measured}, {"tolerance", r.tolerance}, {"pass", r.pass}});
        all = all && r.pass;
    }
    run.write_json("invariants.json", {{"all_pass", all}, {"checks", j}});
    print_table(rows);
    return all ? 0 : 1;
}

int cmd_check_conditions(Run& run) {
    const auto& p = run.params();
    const auto& m = run.model();
    if (m.m() == 0) throw ConfigError("diffusion", "condition checks need at least one noise direction");
    const int K = p.control_steps;
    // a smooth reference control with energy N / 2, well inside S_N
    Eigen::MatrixXd hv(K, m.m());
    for (int k = 0; k < K; ++k) {
        const double s = (k + 0.5) / K;
        for (int j = 0; j < m.m(); ++j) hv(k, j) = std::sin(2.0 * std::numbers::pi * (j + 1) * s + 0.3 * j);
    }
    hv *= std::sqrt(0.5 * p.N / (hv.squaredNorm() * m.T / K));
    const ControlPath h(m.T, hv, p.N);

    ConditionAOptions ao;
    ao.dt = m.T / (K * p.substeps * 4);
    ao.threads = p.threads;
    ao.seed = p.seed;
    const ConditionAReport a = condition_a_check(m, run.tensor(), h, p.eps_list, p.n_rep, ao);

    ConditionBOptions bo;
    bo.cells = K;
    bo.substeps = p.substeps;
    bo.seed = p.seed;
    bo.threads = p.threads;
    const ConditionBReport b = condition_b_check(m, run.tensor(), p.N, p.n_controls, bo);

    const MomentReport mom = moment_study(m, run.tensor(), p.eps_list, p.n_rep, nullptr, ao.dt, p.seed, p.threads);

    json arows = json::array();
    for (const auto& r : a.rows) {
        arows.push_back({{"eps", r.eps},
                         {"mean_sup_dist", r.mean_sup_dist},
                         {"mean_sup_dist2", r.mean_sup_dist2},
                         {"noise_term", r.noise_term},
                         {"eps_energy", r.eps_energy},
                         {"control_term", r.control_term},
                         {"growth", r.growth},
                         {"gronwall_bound", r.gronwall_bound}});
    }
    json mrows = json::array();
    for (const auto& r : mom.rows) mrows.push_back({{"eps", r.eps}, {"mean_sup_w4", r.mean_sup_w4}});
    run.write_json("conditions.json",
                   {{"condition_a", {{"rows", arows}, {"sqrt_eps_slope", a.sqrt_fit.slope}, {"r2", a.sqrt_fit.r2}, {"decreasing", a.decreasing}}},
                    {"condition_b",
                     {{"N", b.N},
                      {"n_controls", b.n_controls},
                      {"lipschitz_max", b.lipschitz_max},
                      {"lipschitz_fit", b.lipschitz_fit},
                      {"image_diameter", b.image_diameter},
                      {"control_diameter", b.control_diameter},
                      {"sup_image_norm", b.sup_image_norm},
                      {"radii", b.radii},
                      {"covering", b.covering},
                      {"sample_sizes", b.sample_sizes},
                      {"covering_growth", b.covering_growth},
                      {"control_covering_growth", b.control_covering_growth},
                      {"saturated", b.saturated}}},
                    {"moments", {{"rows", mrows}, {"ratio", mom.ratio}}}});

    const bool pa = a.sqrt_fit.r2 >= 0.9 && a.decreasing;
    const bool pb = std::isfinite(b.lipschitz_fit) && b.saturated;
    const bool pm = mom.ratio <= 2.0;
    print_table({{"condition (a): C sqrt(eps) fit", "R^2 " + num(a.sqrt_fit.r2) + ", C " + num(a.sqrt_fit.slope), pa},
                 {"condition (b): modulus + covering", "L_fit " + num(b.lipschitz_fit) + ", L_max " + num(b.lipschitz_max), pb},
                 {"uniform moments", "max/min E sup|u|_W^4 = " + num(mom.ratio), pm}});
    return pa && pb && pm ? 0 : 1;
}

int dispatch(const std::string& command, Run& run) {
    if (command == "simulate") return cmd_simulate(run);
    if (command == "skeleton") return cmd_skeleton(run);
    if (command == "rate") return cmd_rate(run);
    if (command == "sweep") return cmd_sweep(run);
    if (command == "check-invariants") return cmd_check_invariants(run);
    if (command == "check-conditions") return cmd_check_conditions(run);
    throw ConfigError("command", "unknown command \"" + command + "\"");
}

int run_and_record(const std::string& command, const json& doc, const json& args, const fs::path& out) {
    Run run(command, doc, args, out);
    const int code = dispatch(command, run);
    run.finish();
    return code;
}

struct ErrorInfo {
    std::string type;
    std::string field;
    int code = 1;
};

void report_error(const ErrorInfo& info, const std::string& message, const std::optional<fs::path>& out) {
    json j{{"error", {{"type", info.type}, {"message", message}, {"exit_code", info.code}}}};
    if (!info.field.empty()) j["error"]["field"] = info.field;
    std::cerr << j.dump() << '\n';
    if (out) {
        std::error_code ec;
        fs::create_directories(*out, ec);
        std::ofstream os(*out / "error.json");
        if (os) os << j.dump(2) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-noise large deviations for the stochastic second-grade fluid on the torus"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::kToolVersion));

    std::string config_path;
    std::string out_dir = "out";
    std::string cache_dir;
    std::string target_path;
    std::string control_path;
    std::string manifest_path;
    Overrides ov;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration document")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--threads", ov.threads, "worker threads for ensembles")->check(CLI::PositiveNumber);
        sub->add_option("--seed", ov.seed, "master seed");
        sub->add_option("--dt", ov.dt, "time step");
        sub->add_option("--set", ov.set, "override a config field, key=value (repeatable)");
        sub->add_option("--tensor-cache", cache_dir, "directory for cached trilinear tensors");
    };

    auto* simulate = app.add_subcommand("simulate", "Euler-Maruyama path of the stochastic equation");
    common(simulate);
    simulate->add_option("--eps", ov.eps, "noise intensity");
    auto* skeleton = app.add_subcommand("skeleton", "RK4 path of the controlled skeleton equation");
    common(skeleton);
    skeleton->add_option("--control", control_path, "control CSV (t, hdot_1..hdot_m); zero control if absent")
        ->check(CLI::ExistingFile);
    auto* rate = app.add_subcommand("rate", "endpoint rate function by adjoint optimisation");
    common(rate);
    rate->add_option("--target", target_path, "JSON field document for the target endpoint")->required()->check(CLI::ExistingFile);
    auto* sweep = app.add_subcommand("sweep", "Monte Carlo estimates of -eps log P for decreasing eps");
    common(sweep);
    sweep->add_option("--eps", ov.eps_list, "comma-separated decreasing eps list");
    sweep->add_option("--n", ov.n, "samples per eps");
    auto* inv = app.add_subcommand("check-invariants", "operator identities, energy balance and adjoint checks");
    common(inv);
    auto* cond = app.add_subcommand("check-conditions", "empirical checks of the weak-convergence conditions");
    common(cond);
    auto* replay = app.add_subcommand("replay", "re-run a command from its manifest");
    replay->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", out_dir, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error({"usage", "", 2}, e.what(), std::nullopt);
        return 2;
    }

    const fs::path out(out_dir);
    try {
        if (replay->parsed()) {
            const json m = io::parse_json_text(io::read_text(manifest_path), manifest_path);
            return run_and_record(m.at("command").get<std::string>(), m.at("config"), m.at("args"), out);
        }
        CLI::App* sub = app.get_subcommands().front();
        json doc = io::parse_json_text(io::read_text(config_path), config_path);
        if (!doc.is_object()) throw ConfigError("", "configuration must be a JSON object");
        ov.apply(doc);
        json args = json::object();
        if (!cache_dir.empty()) args["tensor_cache"] = cache_dir;
        if (!target_path.empty()) args["target"] = io::parse_json_text(io::read_text(target_path), target_path);
        if (!control_path.empty()) {
            std::ifstream is(control_path);
            // T is checked against the config when the run starts
            const ControlPath h = io::read_control_csv(is, 1.0);
            std::vector<std::vector<double>> rows;
            for (int k = 0; k < h.cells(); ++k) {
                const Eigen::VectorXd r = h.at_cell(k);
                rows.emplace_back(r.data(), r.data() + r.size());
            }
            args["control"] = rows;
        }
        return run_and_record(sub->get_name(), doc, args, out);
    } catch (const ConfigError& e) {
        report_error({"config", e.field(), 2}, e.what(), out);
        return 2;
    } catch (const DimensionError& e) {
        report_error({"dimension", "", 2}, e.what(), out);
        return 2;
    } catch (const FormatError& e) {
        report_error({"format", "", 3}, e.what(), out);
        return 3;
    } catch (const BlowUpError& e) {
        report_error({"blow_up", "", 4}, e.what(), out);
        return 4;
    } catch (const std::exception& e) {
        report_error({"runtime", "", 1}, e.what(), out);
        return 1;
    }
}
