#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cobez/csverify.hpp"
#include "cobez/grid.hpp"
#include "cobez/maps.hpp"
#include "cobez/parallel.hpp"
#include "cobez/persist.hpp"
#include "cobez/tau.hpp"
#include "cobez/taylor.hpp"
#include "cobez/version.hpp"
#include "cobez/zeros.hpp"

namespace cobez::cli {

using nlohmann::json;

namespace detail {

struct MapOptions {
    std::string spec = "builtin:exp_shift_n";
    int n = 1;
    std::string coeffs;   // "re:im,re:im,..." or "re,re,..."
    std::string c_spec = "pow:1,1";
    double trunc_tol = 0x1p-50;
};

inline std::vector<std::complex<double>> parse_coeffs(const std::string& s) {
    std::vector<std::complex<double>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            out.push_back({std::stod(item), 0.0});
        else
            out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    }
    return out;
}

inline maps::CSParams cs_params(const MapOptions& o) {
    return maps::CSParams{maps::CSequence::from_spec(o.c_spec), o.trunc_tol};
}

inline maps::EntireMap make_map_from_json(const json& j);

inline maps::EntireMap make_map(const MapOptions& o) {
    const std::string& s = o.spec;
    if (s.rfind("builtin:", 0) == 0) {
        maps::BuiltinParams bp;
        bp.n = o.n;
        if (!o.coeffs.empty()) bp.coeffs = parse_coeffs(o.coeffs);
        bp.cs = cs_params(o);
        return maps::builtin(s.substr(8), bp);
    }
    if (s.rfind("expr:", 0) == 0) {
        std::vector<std::string> comps;
        std::stringstream ss(s.substr(5));
        std::string item;
        while (std::getline(ss, item, ';')) comps.push_back(item);
        return maps::expression_map(comps, o.n);
    }
    std::string path = s;
    if (s.rfind("file:", 0) == 0) path = s.substr(5);
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
        std::ifstream in(path);
        if (!in) throw maps::config_error("cannot open map config: " + path);
        return make_map_from_json(json::parse(in));
    }
    throw maps::config_error("unknown map spec: " + s +
                             " (use builtin:NAME, expr:EXPR, or a .json map config)");
}

// Map-config JSON, schema "cobez-map-v1" (documented in docs/map_config_v1.md).
inline maps::EntireMap make_map_from_json(const json& j) {
    if (j.value("schema", "cobez-map-v1") != "cobez-map-v1")
        throw maps::config_error("unsupported map config schema");
    std::string kind = j.at("kind");
    int n = j.value("n", 1);
    json params = j.value("params", json::object());
    if (kind == "builtin") {
        maps::BuiltinParams bp;
        bp.n = n;
        if (params.contains("coeffs"))
            for (auto& c : params["coeffs"]) bp.coeffs.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        if (params.contains("c")) bp.cs.c = maps::CSequence::from_spec(params["c"].get<std::string>());
        if (params.contains("truncation_rel_err")) bp.cs.truncation_rel_err = params["truncation_rel_err"];
        return maps::builtin(j.at("name"), bp);
    }
    if (kind == "expr") {
        std::vector<std::string> comps = j.at("components").get<std::vector<std::string>>();
        return maps::expression_map(comps, n);
    }
    throw maps::config_error("map config kind must be builtin or expr");
}

inline void emit(const json& report, const std::string& csv, const std::string& format,
                 const std::string& out_path, std::ostream& out) {
    std::string payload = (format == "json") ? report.dump(2) + "\n" : csv;
    if (out_path.empty()) {
        out << payload;
    } else {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw maps::config_error("cannot open output path: " + out_path);
        f << payload;
    }
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// Exit codes: 0 success, 2 validation/usage error, 3 unconverged at the cell
// cap under --strict.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"coarse (persistence-flavored) zero counting for entire maps"};
    app.require_subcommand(1);

    detail::MapOptions mo;
    double r = 10.0, delta = 0.5, a = 2.0, eps = 0.05, stab_c = 0.15;
    double log2mu = 0.0;
    int res = 256;
    std::int64_t budget = 4096;
    int threads = 0;
    std::string format = "json", out_path, r_pows = "10,15,20,25,30";
    std::string map2_spec, perturb;
    bool strict = false;

    auto add_common = [&](CLI::App* cmd, bool with_map) {
        if (with_map) {
            cmd->add_option("--map", mo.spec, "map spec: builtin:NAME | expr:EXPR | config.json");
            cmd->add_option("--n", mo.n, "complex dimension for builtin/expr maps");
            cmd->add_option("--coeffs", mo.coeffs, "polynomial coefficients re[:im],...");
            cmd->add_option("--c", mo.c_spec, "c-sequence spec (pow:lambda,l | explicit:[...])");
        }
        cmd->add_option("--format", format, "csv | json");
        cmd->add_option("--out", out_path, "output path (default stdout)");
        cmd->add_option("--threads", threads, "worker thread count (env COARSE_BEZOUT_THREADS)");
    };

    auto* c_count = app.add_subcommand("count", "zeta and zeta0 by sublevel grid counting");
    add_common(c_count, true);
    c_count->add_option("--r", r, "ball radius");
    c_count->add_option("--delta", delta, "coarse threshold");
    c_count->add_option("--res", res, "starting cells per axis");
    c_count->add_option("--a", a, "radius factor for bound verdicts");
    c_count->add_flag("--strict", strict, "exit 3 when unconverged at the cell cap");

    auto* c_tau = app.add_subcommand("tau", "zeros with multiplicity in islands (argument principle)");
    add_common(c_tau, true);
    c_tau->add_option("--r", r, "ball radius");
    c_tau->add_option("--delta", delta, "coarse threshold");
    c_tau->add_option("--res", res, "starting cells per axis");
    c_tau->add_option("--a", a, "radius factor for bound verdicts");
    c_tau->add_flag("--strict", strict, "exit 3 when unconverged at the cell cap");

    auto* c_barcode = app.add_subcommand("barcode", "0-dimensional sublevel barcode of |f|");
    add_common(c_barcode, true);
    c_barcode->add_option("--r", r, "ball radius");
    c_barcode->add_option("--res", res, "cells per axis");

    auto* c_mu = app.add_subcommand("mu", "maximum modulus estimate");
    add_common(c_mu, true);
    c_mu->add_option("--r", r, "ball radius");
    c_mu->add_option("--budget", budget, "sample budget");

    auto* c_bez = app.add_subcommand("bezout-bound", "coarse Bezout / Rouche / homology bound values");
    add_common(c_bez, false);
    c_bez->add_option("--n", mo.n, "complex dimension");
    c_bez->add_option("--a", a, "radius factor");
    c_bez->add_option("--log2mu", log2mu, "log2 mu(f, a r)");
    c_bez->add_option("--delta", delta, "coarse threshold");

    auto* c_cs = app.add_subcommand("cs-verify", "structural Cornalba-Shiffman verification table");
    add_common(c_cs, false);
    c_cs->add_option("--c", mo.c_spec, "c-sequence spec");
    c_cs->add_option("--delta", delta, "coarse threshold");
    c_cs->add_option("--r-pows", r_pows, "comma list of exponents k, rows at r = 2^k");
    c_cs->add_option("--budget", budget, "mu sampling budget");

    auto* c_stab = app.add_subcommand("stability", "barcode stability verdict for two maps");
    add_common(c_stab, true);
    c_stab->add_option("--map2", map2_spec, "second map spec (default: first map shifted)");
    c_stab->add_option("--perturb", perturb, "constant shift re[:im] applied to the first map");
    c_stab->add_option("--stab-c", stab_c, "stability constant c");
    c_stab->add_option("--eps", eps, "stability epsilon");
    c_stab->add_option("--r", r, "ball radius");
    c_stab->add_option("--res", res, "cells per axis");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (threads > 0) par::set_thread_count(threads);

        auto need = [&](bool cond, const std::string& msg) {
            if (!cond) throw maps::config_error(msg);
        };

        json report;
        report["tool"] = "cobez";
        report["version"] = kVersion;
        report["schema"] = "cobez-report-v1";

        if (app.got_subcommand(c_count) || app.got_subcommand(c_tau)) {
            need(delta > 0.0, "delta must be positive");
            need(r > 0.0, "r must be positive");
            need(a > 1.0, "a must be greater than 1");
            maps::EntireMap map = detail::make_map(mo);
            json cfg{{"map", map.describe()}, {"r", r}, {"delta", delta}, {"res", res}, {"a", a}};
            report["config"] = cfg;
            bool is_tau = app.got_subcommand(c_tau);
            report["command"] = is_tau ? "tau" : "count";
            std::string csv;
            bool converged = true;
            if (is_tau) {
                auto rep = zeros::tau(map, r, delta, res);
                converged = rep.converged;
                report["tau"] = rep.tau;
                report["islands"] = rep.islands;
                report["converged"] = rep.converged;
                report["resolutions"] = rep.resolutions;
                csv = "r,delta,tau,islands,converged\n" + detail::fmt(r) + "," + detail::fmt(delta) +
                      "," + std::to_string(rep.tau) + "," + std::to_string(rep.islands) + "," +
                      (rep.converged ? "1" : "0") + "\n";
            } else {
                auto rep = grid::coarse_count(map, r, delta, res);
                converged = rep.converged;
                report["zeta"] = rep.zeta;
                report["zeta0"] = rep.zeta0;
                report["converged"] = rep.converged;
                report["resolutions"] = rep.resolutions;
                // bound verdict: zeta <= bezout bound at radius factor a
                json verdicts;
                std::optional<double> mu_up = map.log2_mu_upper(a * r);
                double log2_mu_ar =
                    mu_up ? *mu_up : maps::mu_estimate(map, a * r, budget).log2_mu_lower;
                verdicts["mu_basis"] = mu_up ? "analytic-upper" : "sampled-lower";
                bool in_range = std::log2(delta) < log2_mu_ar - 1.0;
                verdicts["delta_in_range"] = in_range;
                if (in_range) {
                    double bound = taylor::bezout_bound(map.dim_in(), a, log2_mu_ar, delta);
                    verdicts["bezout_bound"] = bound;
                    verdicts["zeta_le_bezout_bound"] = static_cast<double>(rep.zeta) <= bound;
                }
                verdicts["zeta0_le_zeta"] = rep.zeta0 <= rep.zeta;
                if (map.dim_in() == 1 && !rep.resolutions.empty()) {
                    int final_res = rep.resolutions.back();
                    if (final_res <= 4096) {
                        auto bc = persist::barcode0(map, r, final_res);
                        std::int64_t nd = persist::count_long_bars(bc, delta);
                        report["n_delta"] = nd;
                        verdicts["zeta_le_n_delta"] = rep.zeta <= nd;
                    }
                }
                report["verdicts"] = verdicts;
                csv = "r,delta,zeta,zeta0,converged,res_final\n" + detail::fmt(r) + "," +
                      detail::fmt(delta) + "," + std::to_string(rep.zeta) + "," +
                      std::to_string(rep.zeta0) + "," + (rep.converged ? "1" : "0") + "," +
                      std::to_string(rep.resolutions.empty() ? 0 : rep.resolutions.back()) + "\n";
            }
            detail::emit(report, csv, format, out_path, out);
            if (strict && !converged) return 3;
            return 0;
        }

        if (app.got_subcommand(c_barcode)) {
            need(r > 0.0, "r must be positive");
            maps::EntireMap map = detail::make_map(mo);
            report["command"] = "barcode";
            report["config"] = json{{"map", map.describe()}, {"r", r}, {"res", res}};
            auto bc = persist::barcode0(map, r, res);
            std::ostringstream csv;
            persist::write_csv(bc, csv);
            json bars = json::array();
            for (auto& b : bc.bars) {
                json jb{{"birth", b.birth}, {"multiplicity", b.multiplicity}};
                if (b.infinite())
                    jb["death"] = "inf";
                else
                    jb["death"] = b.death;
                bars.push_back(jb);
            }
            report["bars"] = bars;
            detail::emit(report, csv.str(), format, out_path, out);
            return 0;
        }

        if (app.got_subcommand(c_mu)) {
            need(r > 0.0, "r must be positive");
            need(budget >= 1, "budget must be at least 1");
            maps::EntireMap map = detail::make_map(mo);
            report["command"] = "mu";
            report["config"] = json{{"map", map.describe()}, {"r", r}, {"budget", budget}};
            auto rep = maps::mu_estimate(map, r, budget);
            report["log2_mu_lower"] = rep.log2_mu_lower;
            if (rep.log2_mu_upper) {
                report["log2_mu_upper"] = *rep.log2_mu_upper;
                report["upper_note"] = rep.upper_note;
            }
            report["sample_count"] = rep.sample_count;
            std::string csv = "r,log2_mu_lower,log2_mu_upper,samples\n" + detail::fmt(r) + "," +
                              detail::fmt(rep.log2_mu_lower) + "," +
                              (rep.log2_mu_upper ? detail::fmt(*rep.log2_mu_upper) : "") + "," +
                              std::to_string(rep.sample_count) + "\n";
            detail::emit(report, csv, format, out_path, out);
            return 0;
        }

        if (app.got_subcommand(c_bez)) {
            need(delta > 0.0, "delta must be positive");
            need(a > 1.0, "a must be greater than 1");
            need(mo.n >= 1, "n must be at least 1");
            report["command"] = "bezout-bound";
            report["config"] = json{{"n", mo.n}, {"a", a}, {"log2mu", log2mu}, {"delta", delta}};
            std::int64_t k = taylor::choose_degree(a, log2mu, delta);
            report["k"] = k;
            report["bezout_bound"] = taylor::bezout_bound(mo.n, a, log2mu, delta);
            report["tau_bound"] = taylor::tau_bound(mo.n, a, log2mu, delta);
            report["zeta_d_bound"] = taylor::zeta_d_bound(mo.n, a, log2mu, delta);
            std::string csv = "n,a,log2mu,delta,k,bezout_bound,tau_bound,zeta_d_bound\n" +
                              std::to_string(mo.n) + "," + detail::fmt(a) + "," + detail::fmt(log2mu) +
                              "," + detail::fmt(delta) + "," + std::to_string(k) + "," +
                              detail::fmt(report["bezout_bound"]) + "," +
                              detail::fmt(report["tau_bound"]) + "," +
                              detail::fmt(report["zeta_d_bound"]) + "\n";
            detail::emit(report, csv, format, out_path, out);
            return 0;
        }

        if (app.got_subcommand(c_cs)) {
            need(delta > 0.0, "delta must be positive");
            maps::CSParams params = detail::cs_params(mo);
            report["command"] = "cs-verify";
            report["config"] = json{{"c", params.c.spec()}, {"delta", delta}, {"r_pows", r_pows}};
            maps::EntireMap F = maps::cs_F_map(params);
            std::string csv =
                "r,log2_r,zeta_lower,zeta_upper,envelope_lower,envelope_upper,mu_lower,mu_upper,"
                "islands_upper\n";
            json rows = json::array();
            std::stringstream ss(r_pows);
            std::string item;
            while (std::getline(ss, item, ',')) {
                int k = std::stoi(item);
                double rr = std::ldexp(1.0, k);
                auto br = csverify::zeta_bracket(rr, delta, params);
                auto mu = maps::mu_estimate(F, rr, budget);
                auto [mu_lo, mu_hi] = maps::mu_cs_bounds(rr);
                std::string islands;
                json jrow{{"r", rr},
                          {"log2_r", static_cast<double>(k)},
                          {"zeta_lower", br.lower},
                          {"zeta_upper", br.upper},
                          {"envelope_lower", br.envelope_lower},
                          {"envelope_upper", br.envelope_upper},
                          {"mu_lower", mu.log2_mu_lower},
                          {"mu_upper", mu_hi},
                          {"inside_envelope", br.inside_envelope},
                          {"mu_inside", mu.log2_mu_lower >= mu_lo && mu.log2_mu_lower <= mu_hi}};
                if (params.c.is_pow_rule()) {
                    auto z0 = csverify::zeta0_analysis(rr, delta, params);
                    if (z0.applicable) {
                        islands = detail::fmt(z0.upper_bound);
                        jrow["islands_upper"] = z0.upper_bound;
                    }
                }
                rows.push_back(jrow);
                csv += detail::fmt(rr) + "," + std::to_string(k) + "," + std::to_string(br.lower) +
                       "," + std::to_string(br.upper) + "," + detail::fmt(br.envelope_lower) + "," +
                       detail::fmt(br.envelope_upper) + "," + detail::fmt(mu.log2_mu_lower) + "," +
                       detail::fmt(mu_hi) + "," + islands + "\n";
            }
            report["rows"] = rows;
            detail::emit(report, csv, format.empty() ? "csv" : format, out_path, out);
            return 0;
        }

        if (app.got_subcommand(c_stab)) {
            need(r > 0.0, "r must be positive");
            maps::EntireMap f = detail::make_map(mo);
            maps::EntireMap g = [&] {
                if (!map2_spec.empty()) {
                    detail::MapOptions m2 = mo;
                    m2.spec = map2_spec;
                    return detail::make_map(m2);
                }
                auto shift = perturb.empty() ? std::vector<std::complex<double>>{{0.1, 0.0}}
                                             : detail::parse_coeffs(perturb);
                std::vector<std::complex<double>> full(static_cast<std::size_t>(f.dim_out()),
                                                       shift.at(0));
                return maps::shifted_map(f, full);
            }();
            report["command"] = "stability";
            report["config"] = json{{"map", f.describe()}, {"map2", g.describe()}, {"r", r},
                                    {"res", res},          {"c", stab_c},          {"eps", eps}};
            auto rep = persist::stability_check(f, g, stab_c, eps, r, res);
            const char* verdict = rep.verdict == persist::StabilityVerdict::holds     ? "holds"
                                  : rep.verdict == persist::StabilityVerdict::fails   ? "fails"
                                                                                      : "inapplicable";
            report["verdict"] = verdict;
            report["sampled_distance"] = rep.sampled_distance;
            if (rep.n_f_2c >= 0) {
                report["n_f_2c"] = rep.n_f_2c;
                report["n_g_eps"] = rep.n_g_eps;
            }
            std::string csv = "verdict,sampled_distance,n_f_2c,n_g_eps\n" + std::string(verdict) +
                              "," + detail::fmt(rep.sampled_distance) + "," +
                              std::to_string(rep.n_f_2c) + "," + std::to_string(rep.n_g_eps) + "\n";
            detail::emit(report, csv, format, out_path, out);
            return 0;
        }

        err << "error: no subcommand\n";
        return 2;
    } catch (const maps::config_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const taylor::domain_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const grid::grid_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

}  // namespace cobez::cli
