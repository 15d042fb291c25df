#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rviq/bias.hpp"
#include "rviq/generators.hpp"
#include "rviq/harness.hpp"
#include "rviq/learning.hpp"
#include "rviq/ode.hpp"
#include "rviq/oracle.hpp"
#include "rviq/smdp.hpp"

namespace py = pybind11;
using namespace rviq;

namespace {

SmdpModel model_from_text(const std::string& text) { return model_from_json(nlohmann::json::parse(text)); }

py::dict learn(const SmdpModel& model, const BiasFn& f, const std::string& stepsize_kind, double A, double varsigma,
               std::size_t n_steps, std::uint64_t seed, std::size_t thinning, double T0) {
    const ExpectedQuantities eq = expected_quantities(model);
    RviQlConfig cfg;
    cfg.f = f;
    cfg.step = stepsize_kind == "class1" ? StepsizeSchedule::class1(A) : StepsizeSchedule::class2(A);
    cfg.varsigma = varsigma;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    cfg.thinning = thinning;
    cfg.T0 = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eq.n_pairs()), T0);
    QlRun run;
    {
        py::gil_scoped_release release;
        run = run_rvi_q(model, eq, cfg);
    }
    const double r_star = optimal_rate_bruteforce(eq).r_star(0);
    const ConvergenceReport rep = convergence_report(run, eq, f, r_star);
    py::dict out;
    out["Q"] = Eigen::VectorXd(run.trace.final_x());
    out["T"] = run.final_T;
    out["r_star"] = r_star;
    out["rate_error"] = rep.final_rate_error;
    out["qf_residual"] = rep.final_qf_residual;
    out["holding_error"] = rep.final_holding_error;
    out["tail_oscillation"] = rep.tail_oscillation;
    out["greedy_optimal"] = rep.greedy_optimal;
    out["snapshot_steps"] = run.trace.n;
    out["rate_error_series"] = rep.rate_error;
    return out;
}

py::tuple command(const std::string& name, const std::string& config_json, const std::string& output_root) {
    HarnessOptions opts;
    if (!output_root.empty()) opts.output_root = output_root;
    const nlohmann::json cfg = nlohmann::json::parse(config_json);
    CommandResult res;
    {
        py::gil_scoped_release release;
        res = run_command(name, cfg, opts);
    }
    return py::make_tuple(res.exit_code, res.summary.dump(), res.run_dir.string());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "RVI Q-learning for semi-Markov decision processes";

    py::class_<SmdpModel>(m, "SmdpModel")
        .def_property_readonly("n_states", &SmdpModel::n_states)
        .def_property_readonly("n_actions", &SmdpModel::n_actions)
        .def_property_readonly("n_pairs", &SmdpModel::n_pairs)
        .def("to_json", [](const SmdpModel& s) { return model_to_json(s).dump(); })
        .def_static("from_json", &model_from_text, py::arg("text"));

    py::class_<ExpectedQuantities>(m, "ExpectedQuantities")
        .def_readonly("r", &ExpectedQuantities::r)
        .def_readonly("t", &ExpectedQuantities::t)
        .def_readonly("p", &ExpectedQuantities::p)
        .def_readonly("t_min", &ExpectedQuantities::t_min)
        .def_readonly("n_states", &ExpectedQuantities::n_states)
        .def_readonly("n_actions", &ExpectedQuantities::n_actions);

    m.def("expected_quantities", &expected_quantities, py::arg("model"));
    m.def("validate_model", [](const SmdpModel& s) { return validate_model(s).violations; }, py::arg("model"));
    m.def("is_weakly_communicating",
          [](const SmdpModel& s) { return classify_communication(s).is_weakly_communicating; }, py::arg("model"));
    m.def("is_weakly_communicating_exact", &is_weakly_communicating_exact, py::arg("model"));
    m.def("load_model", [](const std::string& p) { return load_model(p); }, py::arg("path"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));

    m.def("loop_canonical", &loop_canonical);
    m.def("cycle_canonical", &cycle_canonical);
    m.def("transient_feeder", &transient_feeder);
    m.def(
        "random_wcom",
        [](std::size_t n_states, std::size_t n_actions, std::uint64_t seed) {
            return generate_instance(GeneratorSpec::random_wcom(n_states, n_actions, seed));
        },
        py::arg("n_states"), py::arg("n_actions"), py::arg("seed"));

    py::class_<BiasFn>(m, "BiasFn")
        .def_static("affine", &BiasFn::affine, py::arg("b"), py::arg("theta"))
        .def_static("extremum", &BiasFn::extremum, py::arg("b"), py::arg("beta"), py::arg("subset"),
                    py::arg("use_max"), py::arg("dim"))
        .def_static("reference_component", &BiasFn::reference_component, py::arg("index"), py::arg("dim"))
        .def_static("counterexample2d", &BiasFn::counterexample2d)
        .def_static("uniform", [](std::size_t d) {
            return BiasFn::affine(0.0, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 1.0 / static_cast<double>(d)));
        })
        .def_property_readonly("dim", &BiasFn::dim)
        .def("__call__", &BiasFn::eval, py::arg("x"))
        .def("eval_infty", &BiasFn::eval_infty, py::arg("x"))
        .def("lipschitz", &BiasFn::lipschitz_closed_form)
        .def("describe", &BiasFn::describe)
        .def("__repr__", [](const BiasFn& f) { return "<BiasFn " + f.describe() + ">"; });

    m.def("shipped_family", &shipped_family, py::arg("dim"));
    m.def(
        "check_sistr",
        [](const BiasFn& f, const std::vector<Eigen::VectorXd>& probes) { return check_sistr(f, probes, SistrGrid{}).ok(); },
        py::arg("f"), py::arg("probes"));
    m.def("solve_translation", &solve_translation, py::arg("f"), py::arg("x"), py::arg("target"));

    m.def(
        "optimal_rate",
        [](const ExpectedQuantities& eq) {
            const OptimalRates o = optimal_rate_bruteforce(eq);
            return py::make_tuple(o.r_star, o.best_policy);
        },
        py::arg("eq"));
    m.def(
        "schweitzer_rvi",
        [](const ExpectedQuantities& eq, const BiasFn& f, std::optional<double> bar_alpha) {
            const RviResult r = schweitzer_rvi(eq, f, bar_alpha.value_or(eq.t_min));
            py::dict out;
            out["q"] = r.q;
            out["rate_estimate"] = r.rate_estimate;
            out["iterations"] = r.iterations;
            out["converged"] = r.converged;
            out["residual"] = r.final_residual;
            return out;
        },
        py::arg("eq"), py::arg("f"), py::arg("bar_alpha") = py::none());
    m.def("qf_residual", &qf_residual, py::arg("eq"), py::arg("f"), py::arg("q"));
    m.def("h_eval", &h_eval, py::arg("eq"), py::arg("f"), py::arg("bar_alpha"), py::arg("q"));

    m.def(
        "a_star",
        [](const ExpectedQuantities& eq, const BiasFn& f) {
            return validate_thresholds(eq, f, StepsizeSchedule::class2(1.0), 1.0).A_star;
        },
        py::arg("eq"), py::arg("f"));
    m.def("learn", &learn, py::arg("model"), py::arg("f"), py::arg("stepsize_kind") = "class2", py::arg("A") = 3.0,
          py::arg("varsigma") = 3.0, py::arg("n_steps") = 100000, py::arg("seed") = 0, py::arg("thinning") = 1000,
          py::arg("T0") = 1.0);

    m.def(
        "integrate",
        [](const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x0, double t_end,
           double dt) {
            const OdePath p = integrate(VectorField::user(static_cast<std::size_t>(x0.size()), fn), x0, t_end, dt);
            return py::make_tuple(p.times, p.points);
        },
        py::arg("field"), py::arg("x0"), py::arg("t_end"), py::arg("dt"));

    m.def("config_hash", [](const std::string& text) { return config_hash(nlohmann::json::parse(text)); },
          py::arg("config_json"));
    m.def("run_command", &command, py::arg("command"), py::arg("config_json"), py::arg("output_root") = "");
}
