#pragma once

// Configuration documents, run manifests and file formats.
//
// Snapshot (.traj) layout, little-endian:
//   8 bytes  magic "SGLDPTRJ"
//   u32      format version (kSnapshotVersion)
//   u32      header length H
//   H bytes  JSON header {config_hash, eps, seed, stream, dt, dim, count, sup_v, sup_w}
//   count records of (f64 t, f64 dissipation, dim x f64 coefficients)
//
// Tensor cache (.tns) layout, little-endian:
//   8 bytes magic "SGLDPTNS", u32 version, i32 cutoff, f64 alpha, u64 dim, u64 nnz,
//   nnz records of (u32 i, u32 j, u32 l, f64 value)

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/sha.h>

#include <json.hpp>

#include "sgldp/basis.hpp"
#include "sgldp/errors.hpp"
#include "sgldp/fluid_ops.hpp"
#include "sgldp/integrators.hpp"
#include "sgldp/ldp.hpp"
#include "sgldp/mc.hpp"

namespace sgldp::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr std::uint32_t kSnapshotVersion = 1;
inline constexpr std::uint32_t kTensorVersion = 1;

// ---------------------------------------------------------------------------
// Hashing and number formatting

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    std::ostringstream os;
    for (unsigned char c : digest) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
    return os.str();
}

/// Hash of the canonical (sorted-key) serialization, so key order in the
/// source document does not matter. "threads" is left out: results never
/// depend on it.
inline std::string config_hash(const json& resolved) {
    json semantic = resolved;
    semantic.erase("threads");
    return sha256_hex(semantic.dump());
}

/// Shortest round-trip decimal form.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Field specifications

/// Builds a coefficient vector from a field document:
///   {"type":"zero"}
///   {"type":"smooth","amplitude":a,"decay":d}   -> ||u||_V = a, spectrum ~ exp(-d (|k|^2 - 1))
///   {"type":"coeffs","values":[...]}            -> raw L2 coefficients
///   {"type":"v_components","entries":[{"mode":i,"value":x}]} -> V-scaled coordinates
inline SpectralField field_from_json(const json& doc, const BasisSpec& basis, const std::string& field) {
    const auto n = static_cast<Eigen::Index>(basis.size());
    if (!doc.is_object() || !doc.contains("type")) throw ConfigError(field, "expected an object with a \"type\"");
    const std::string type = doc.at("type").get<std::string>();
    if (type == "zero") return SpectralField::Zero(n);
    if (type == "smooth") {
        const double amp = doc.value("amplitude", 1.0);
        const double decay = doc.value("decay", 1.0);
        if (!std::isfinite(amp) || !(decay >= 0.0)) throw ConfigError(field, "invalid amplitude or decay");
        SpectralField u(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const ModeKey& m = basis.modes[static_cast<std::size_t>(i)];
            u[i] = std::exp(-decay * (m.norm2() - 1)) * (m.channel == Channel::Cos ? 1.0 : 0.5) /
                   std::sqrt(basis.w_v[i]);
        }
        const double v = norm_v(u, basis);
        return v > 0.0 ? SpectralField(u * (amp / v)) : u;
    }
    if (type == "coeffs") {
        const auto vals = doc.at("values").get<std::vector<double>>();
        if (vals.size() != basis.size()) {
            throw ConfigError(field + ".values", "expected " + std::to_string(basis.size()) + " coefficients");
        }
        return Eigen::Map<const Eigen::VectorXd>(vals.data(), n);
    }
    if (type == "v_components") {
        SpectralField u = SpectralField::Zero(n);
        for (const auto& e : doc.at("entries")) {
            const auto idx = e.at("mode").get<std::size_t>();
            if (idx >= basis.size()) throw ConfigError(field + ".entries", "mode index out of range");
            u[static_cast<Eigen::Index>(idx)] = e.at("value").get<double>() / std::sqrt(basis.w_v[static_cast<Eigen::Index>(idx)]);
        }
        return u;
    }
    throw ConfigError(field + ".type", "unknown field type \"" + type + "\" (supported: zero, smooth, coeffs, v_components)");
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentParams {
    std::uint64_t seed = 1;
    double dt = 1e-3;
    int save_stride = 10;
    double eps = 0.1;
    std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
    std::uint64_t n = 1000;
    int control_steps = 64;
    int substeps = 4;
    double rate_tol = 1e-4;
    double mu_start = 10.0;
    double mu_max = 1e10;
    json event_center = json{{"type", "zero"}};
    double event_radius = 0.3;
    double N = 1.0;
    int n_controls = 50;
    int n_rep = 64;
    int threads = 1;
};

struct ExperimentConfig {
    ModelConfig model;
    ExperimentParams params;
    json resolved;  ///< canonical document with every default filled in
    std::string hash;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

template <class T>
T get_field(const json& doc, const char* key, const T& fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("wrong type: ") + e.what());
    }
}

}  // namespace detail

inline ForcingFamily parse_forcing_family(const std::string& s) {
    if (s == "none") return ForcingFamily::None;
    if (s == "linear") return ForcingFamily::Linear;
    if (s == "modulated") return ForcingFamily::Modulated;
    throw ConfigError("forcing", "unknown forcing family \"" + s + "\" (supported: none, linear, modulated)");
}

inline DiffusionFamily parse_diffusion_family(const std::string& s) {
    if (s == "none") return DiffusionFamily::None;
    if (s == "diagonal") return DiffusionFamily::Diagonal;
    if (s == "additive") return DiffusionFamily::Additive;
    throw ConfigError("diffusion.family",
                      "unknown diffusion family \"" + s + "\" (supported: none, diagonal, additive)");
}

/// Validates a parsed document and fills defaults.
inline ExperimentConfig config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("", "configuration must be a JSON object");
    static const std::vector<std::string> known{
        "nu", "alpha", "cutoff", "T", "forcing", "kappa", "omega", "phase", "diffusion", "nonlinear", "u0",
        "blowup_ceiling", "seed", "dt", "save_stride", "eps", "eps_list", "n", "control_steps", "substeps",
        "rate_tol", "mu_start", "mu_max", "event", "N", "n_controls", "n_rep", "threads"};
    for (const auto& [k, v] : doc.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError(k, "unknown configuration key");
    }
    for (const char* req : {"nu", "alpha", "cutoff", "T"}) {
        if (!doc.contains(req)) throw ConfigError(req, "required field is missing");
    }
    using detail::get_field;

    ExperimentConfig ec;
    ModelConfig& m = ec.model;
    m.nu = get_field<double>(doc, "nu", 1.0);
    if (!(m.nu > 0.0)) throw ConfigError("nu", "must be positive");
    const double alpha = get_field<double>(doc, "alpha", 1.0);
    if (!(alpha > 0.0)) throw ConfigError("alpha", "must be positive");
    const int cutoff = get_field<int>(doc, "cutoff", 1);
    if (cutoff < 1) throw ConfigError("cutoff", "must be >= 1");
    m.basis = build_torus_basis(cutoff, alpha);
    m.T = get_field<double>(doc, "T", 1.0);
    if (!(m.T > 0.0)) throw ConfigError("T", "must be positive");
    m.nonlinear = get_field<bool>(doc, "nonlinear", true);
    m.blowup_ceiling = get_field<double>(doc, "blowup_ceiling", 1e6);

    ForcingSpec& f = m.forcing;
    f.forcing = parse_forcing_family(get_field<std::string>(doc, "forcing", "none"));
    f.kappa = get_field<double>(doc, "kappa", 0.0);
    f.omega = get_field<double>(doc, "omega", 1.0);
    f.phase = get_field<double>(doc, "phase", 0.0);

    json diff = doc.value("diffusion", json{{"family", "diagonal"}, {"m", 2}});
    if (!diff.is_object()) throw ConfigError("diffusion", "must be an object");
    f.diffusion = parse_diffusion_family(diff.value("family", std::string("diagonal")));
    f.m = diff.value("m", 2);
    f.sigma = diff.value("sigma", std::vector<double>{});
    if (diff.contains("modes")) f.modes = diff.at("modes").get<std::vector<std::size_t>>();
    if (diff.contains("diag")) {
        for (const auto& row : diff.at("diag")) {
            const auto v = row.get<std::vector<double>>();
            f.diag.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        }
    }
    const json u0doc = doc.value("u0", json{{"type", "smooth"}, {"amplitude", 1.0}, {"decay", 1.0}});
    m.u0 = field_from_json(u0doc, m.basis, "u0");
    m.validate();

    ExperimentParams& p = ec.params;
    p.seed = get_field<std::uint64_t>(doc, "seed", p.seed);
    p.dt = get_field<double>(doc, "dt", p.dt);
    p.save_stride = get_field<int>(doc, "save_stride", p.save_stride);
    p.eps = get_field<double>(doc, "eps", p.eps);
    p.eps_list = get_field<std::vector<double>>(doc, "eps_list", p.eps_list);
    p.n = get_field<std::uint64_t>(doc, "n", p.n);
    p.control_steps = get_field<int>(doc, "control_steps", p.control_steps);
    p.substeps = get_field<int>(doc, "substeps", p.substeps);
    p.rate_tol = get_field<double>(doc, "rate_tol", p.rate_tol);
    p.mu_start = get_field<double>(doc, "mu_start", p.mu_start);
    p.mu_max = get_field<double>(doc, "mu_max", p.mu_max);
    p.N = get_field<double>(doc, "N", p.N);
    p.n_controls = get_field<int>(doc, "n_controls", p.n_controls);
    p.n_rep = get_field<int>(doc, "n_rep", p.n_rep);
    p.threads = get_field<int>(doc, "threads", p.threads);
    if (doc.contains("event")) {
        const json& ev = doc.at("event");
        p.event_center = ev.value("center", p.event_center);
        p.event_radius = ev.value("radius", p.event_radius);
    }
    if (!(p.dt > 0.0)) throw ConfigError("dt", "must be positive");
    if (p.save_stride < 1) throw ConfigError("save_stride", "must be >= 1");
    if (!(p.eps >= 0.0)) throw ConfigError("eps", "must be >= 0");
    if (p.n < 1) throw ConfigError("n", "must be >= 1");
    if (p.control_steps < 1) throw ConfigError("control_steps", "must be >= 1");
    if (p.substeps < 1) throw ConfigError("substeps", "must be >= 1");
    if (!(p.event_radius > 0.0)) throw ConfigError("event.radius", "must be positive");
    if (!(p.N > 0.0)) throw ConfigError("N", "must be positive");
    if (p.threads < 1) throw ConfigError("threads", "must be >= 1");
    if (p.event_center.value("type", std::string()) != "deterministic_endpoint") {
        (void)field_from_json(p.event_center, m.basis, "event.center");
    }

    json diff_out{{"family", to_string(f.diffusion)}};
    if (f.diffusion != DiffusionFamily::None) {
        diff_out["m"] = f.m;
        diff_out["sigma"] = f.sigma;
        if (f.diffusion == DiffusionFamily::Additive) diff_out["modes"] = f.modes;
        if (f.diffusion == DiffusionFamily::Diagonal) {
            json rows = json::array();
            for (const auto& d : f.diag) rows.push_back(std::vector<double>(d.data(), d.data() + d.size()));
            diff_out["diag"] = rows;
        }
    }
    ec.resolved = json{{"nu", m.nu},
                       {"alpha", alpha},
                       {"cutoff", cutoff},
                       {"T", m.T},
                       {"forcing", to_string(f.forcing)},
                       {"kappa", f.kappa},
                       {"omega", f.omega},
                       {"phase", f.phase},
                       {"diffusion", diff_out},
                       {"nonlinear", m.nonlinear},
                       {"u0", json{{"type", "coeffs"}, {"values", std::vector<double>(m.u0.data(), m.u0.data() + m.u0.size())}}},
                       {"blowup_ceiling", m.blowup_ceiling},
                       {"seed", p.seed},
                       {"dt", p.dt},
                       {"save_stride", p.save_stride},
                       {"eps", p.eps},
                       {"eps_list", p.eps_list},
                       {"n", p.n},
                       {"control_steps", p.control_steps},
                       {"substeps", p.substeps},
                       {"rate_tol", p.rate_tol},
                       {"mu_start", p.mu_start},
                       {"mu_max", p.mu_max},
                       {"event", json{{"center", p.event_center}, {"radius", p.event_radius}}},
                       {"N", p.N},
                       {"n_controls", p.n_controls},
                       {"n_rep", p.n_rep},
                       {"threads", p.threads}};
    ec.hash = config_hash(ec.resolved);
    return ec;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("", origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": parse error: " + e.what());
    }
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    return config_from_json(parse_json_text(read_text(path), path.string()));
}

// ---------------------------------------------------------------------------
// JSON views of domain objects

inline json basis_to_json(const BasisSpec& b) {
    json modes = json::array();
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const ModeKey& m = b.modes[i];
        modes.push_back({{"k", {m.k1, m.k2}},
                         {"channel", to_string(m.channel)},
                         {"lambda", b.lambda[ii]},
                         {"w_l2", b.w_l2[ii]},
                         {"w_grad", b.w_grad[ii]},
                         {"w_v", b.w_v[ii]},
                         {"w_curlx", b.w_curlx[ii]}});
    }
    return {{"alpha", b.alpha}, {"cutoff", b.cutoff}, {"mode_count", b.size()}, {"modes", modes}};
}

inline BasisSpec basis_from_json(const json& doc) {
    BasisSpec b = build_torus_basis(doc.at("cutoff").get<int>(), doc.at("alpha").get<double>());
    if (doc.contains("modes") && doc.at("modes").size() != b.size()) {
        throw FormatError("basis document lists " + std::to_string(doc.at("modes").size()) + " modes, expected " +
                          std::to_string(b.size()));
    }
    return b;
}

inline json rate_to_json(const RateEstimate& r) {
    json ctl = json::array();
    for (int k = 0; k < r.control.cells(); ++k) {
        const Eigen::VectorXd row = r.control.at_cell(k);
        ctl.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    json j{{"value", r.finite ? json(r.value) : json(nullptr)},
           {"finite", r.finite},
           {"converged", r.converged},
           {"endpoint_gap", r.endpoint_gap},
           {"iterations", r.iterations},
           {"mu_final", r.mu_final},
           {"gap_history", r.gap_history},
           {"best_history", r.best_history},
           {"control", {{"T", r.control.T}, {"cells", r.control.cells()}, {"hdot", ctl}}}};
    if (!r.finite) j["status"] = "no finite rate found";
    return j;
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: comma separated, CRLF line endings)

inline void write_control_csv(const ControlPath& h, std::ostream& os) {
    os << "t";
    for (int j = 0; j < h.m(); ++j) os << ",hdot_" << (j + 1);
    os << "\r\n";
    for (int k = 0; k < h.cells(); ++k) {
        os << fmt(k * h.cell_width());
        for (int j = 0; j < h.m(); ++j) os << ',' << fmt(h.hdot(k, j));
        os << "\r\n";
    }
}

/// Reads the control CSV written above; rows are cells starting at t.
inline ControlPath read_control_csv(std::istream& is, double T) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("control CSV is empty");
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError("control CSV: bad number \"" + cell + "\"");
            }
        }
        if (vals.size() < 2) throw FormatError("control CSV: row needs t and at least one hdot column");
        rows.push_back(vals);
    }
    if (rows.empty()) throw FormatError("control CSV has no data rows");
    const auto m = static_cast<Eigen::Index>(rows.front().size() - 1);
    Eigen::MatrixXd hd(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (static_cast<Eigen::Index>(rows[k].size()) != m + 1) throw FormatError("control CSV: ragged rows");
        for (Eigen::Index j = 0; j < m; ++j) hd(static_cast<Eigen::Index>(k), j) = rows[k][static_cast<std::size_t>(j) + 1];
    }
    return ControlPath(T, hd);
}

inline void write_sweep_csv(const SweepResult& s, std::ostream& os) {
    os << "eps,n,hits,p_hat,lo,hi,neg_eps_log_p,I_ref\r\n";
    for (const auto& r : s.rows) {
        os << fmt(r.eps) << ',' << r.n << ',' << r.hits << ',' << fmt(r.p_hat) << ',' << fmt(r.lo) << ','
           << fmt(r.hi) << ',' << (r.censored ? std::string() : fmt(r.neg_eps_log_p)) << ',' << fmt(r.I_ref)
           << "\r\n";
    }
}

inline void write_norms_csv(const Trajectory& tr, const BasisSpec& b, std::ostream& os) {
    os << "t,norm_v,norm_w\r\n";
    for (std::size_t i = 0; i < tr.size(); ++i) {
        os << fmt(tr.times[i]) << ',' << fmt(norm_v(tr.states[i], b)) << ',' << fmt(norm_w(tr.states[i], b)) << "\r\n";
    }
}

// ---------------------------------------------------------------------------
// Binary snapshots

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

}  // namespace detail

inline constexpr char kSnapshotMagic[8] = {'S', 'G', 'L', 'D', 'P', 'T', 'R', 'J'};
inline constexpr char kTensorMagic[8] = {'S', 'G', 'L', 'D', 'P', 'T', 'N', 'S'};

inline void write_snapshot(const Trajectory& tr, std::ostream& os) {
    const std::size_t dim = tr.states.empty() ? 0 : static_cast<std::size_t>(tr.states.front().size());
    const json header{{"config_hash", tr.config_hash}, {"eps", tr.eps},     {"seed", tr.seed},
                      {"stream", tr.stream},           {"dt", tr.dt},       {"dim", dim},
                      {"count", tr.size()},            {"sup_v", tr.sup_v}, {"sup_w", tr.sup_w}};
    const std::string h = header.dump();
    os.write(kSnapshotMagic, 8);
    detail::put(os, kSnapshotVersion);
    detail::put(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) {
        detail::put(os, tr.times[i]);
        detail::put(os, tr.dissipation.empty() ? 0.0 : tr.dissipation[i]);
        os.write(reinterpret_cast<const char*>(tr.states[i].data()), static_cast<std::streamsize>(dim * sizeof(double)));
    }
    if (!os) throw std::runtime_error("snapshot write failed");
}

inline Trajectory read_snapshot(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kSnapshotMagic, 8) != 0) {
        throw FormatError("not a trajectory snapshot (bad magic)");
    }
    const auto version = detail::take<std::uint32_t>(is, "version");
    if (version != kSnapshotVersion) {
        throw FormatError("snapshot format version " + std::to_string(version) + " is not supported by this build (expects " +
                          std::to_string(kSnapshotVersion) + "); re-export the trajectory with a matching sgldp version");
    }
    const auto hlen = detail::take<std::uint32_t>(is, "header length");
    if (hlen > (1u << 24)) throw FormatError("corrupted snapshot header (implausible length)");
    std::string h(hlen, '\0');
    if (!is.read(h.data(), hlen)) throw FormatError("truncated snapshot header");
    json header;
    try {
        header = json::parse(h);
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupted snapshot header: ") + e.what());
    }
    Trajectory tr;
    std::size_t dim = 0;
    std::size_t count = 0;
    try {
        tr.config_hash = header.at("config_hash").get<std::string>();
        tr.eps = header.at("eps").get<double>();
        tr.seed = header.at("seed").get<std::uint64_t>();
        tr.stream = header.at("stream").get<std::uint64_t>();
        tr.dt = header.at("dt").get<double>();
        tr.sup_v = header.at("sup_v").get<double>();
        tr.sup_w = header.at("sup_w").get<double>();
        dim = header.at("dim").get<std::size_t>();
        count = header.at("count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupted snapshot header: ") + e.what());
    }
    for (std::size_t i = 0; i < count; ++i) {
        tr.times.push_back(detail::take<double>(is, "time"));
        tr.dissipation.push_back(detail::take<double>(is, "dissipation"));
        SpectralField u(static_cast<Eigen::Index>(dim));
        if (!is.read(reinterpret_cast<char*>(u.data()), static_cast<std::streamsize>(dim * sizeof(double)))) {
            throw FormatError("truncated snapshot body");
        }
        tr.states.push_back(std::move(u));
    }
    return tr;
}

inline void save_snapshot(const Trajectory& tr, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_snapshot(tr, os);
}

inline Trajectory load_snapshot(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_snapshot(is);
}

/// Write then read back; the result equals the input coefficient-for-coefficient.
inline Trajectory snapshot_roundtrip(const Trajectory& tr, const std::filesystem::path& path) {
    save_snapshot(tr, path);
    return load_snapshot(path);
}

// ---------------------------------------------------------------------------
// Tensor cache

inline void write_tensor(const TrilinearTensor& t, std::ostream& os) {
    os.write(kTensorMagic, 8);
    detail::put(os, kTensorVersion);
    detail::put(os, static_cast<std::int32_t>(t.cutoff));
    detail::put(os, t.alpha);
    detail::put(os, static_cast<std::uint64_t>(t.dim));
    detail::put(os, static_cast<std::uint64_t>(t.entries.size()));
    for (const auto& e : t.entries) {
        detail::put(os, e.i);
        detail::put(os, e.j);
        detail::put(os, e.l);
        detail::put(os, e.value);
    }
}

inline TrilinearTensor read_tensor(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kTensorMagic, 8) != 0) throw FormatError("not a tensor cache file");
    const auto version = detail::take<std::uint32_t>(is, "version");
    if (version != kTensorVersion) throw FormatError("tensor cache version mismatch; delete the cache to rebuild");
    TrilinearTensor t;
    t.cutoff = detail::take<std::int32_t>(is, "cutoff");
    t.alpha = detail::take<double>(is, "alpha");
    t.dim = detail::take<std::uint64_t>(is, "dim");
    const auto nnz = detail::take<std::uint64_t>(is, "nnz");
    t.entries.reserve(nnz);
    for (std::uint64_t k = 0; k < nnz; ++k) {
        TensorEntry e;
        e.i = detail::take<std::uint32_t>(is, "entry");
        e.j = detail::take<std::uint32_t>(is, "entry");
        e.l = detail::take<std::uint32_t>(is, "entry");
        e.value = detail::take<double>(is, "entry");
        if (e.i >= t.dim || e.j >= t.dim || e.l >= t.dim) throw FormatError("tensor cache entry index out of range");
        t.entries.push_back(e);
    }
    t.build_rows();
    return t;
}

inline std::filesystem::path tensor_cache_path(const std::filesystem::path& dir, int cutoff, double alpha) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "tensor_c%d_a%a.tns", cutoff, alpha);
    return dir / buf;
}

/// Loads the cached tensor for (cutoff, alpha) or assembles and stores it.
inline TrilinearTensor load_or_assemble(const BasisSpec& basis, const std::optional<std::filesystem::path>& cache_dir) {
    if (!cache_dir) return assemble_trilinear(basis);
    const auto path = tensor_cache_path(*cache_dir, basis.cutoff, basis.alpha);
    if (std::filesystem::exists(path)) {
        std::ifstream is(path, std::ios::binary);
        TrilinearTensor t = read_tensor(is);
        if (t.dim == basis.size() && t.cutoff == basis.cutoff && t.alpha == basis.alpha) return t;
    }
    TrilinearTensor t = assemble_trilinear(basis);
    std::filesystem::create_directories(*cache_dir);
    std::ofstream os(path, std::ios::binary);
    if (os) write_tensor(t, os);
    return t;
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
    std::string command;
    json args;       ///< resolved command-line options
    json config;     ///< resolved configuration document
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string started;
    std::string finished;
    std::vector<std::string> outputs;

    json to_json(const BasisSpec& basis) const {
        return {{"tool", "sgldp"},
                {"version", kToolVersion},
                {"command", command},
                {"args", args},
                {"config", config},
                {"config_hash", config_hash},
                {"basis", {{"cutoff", basis.cutoff}, {"alpha", basis.alpha}, {"mode_count", basis.size()}}},
                {"seed", seed},
                {"started", started},
                {"finished", finished},
                {"outputs", outputs}};
    }
};

}  // namespace sgldp::io
