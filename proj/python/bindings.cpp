#include "sisfm/error.hpp"
#include "sisfm/gibbs.hpp"
#include "sisfm/io.hpp"
#include "sisfm/priors.hpp"
#include "sisfm/simulation.hpp"
#include "sisfm/summary.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace sisfm;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& y, std::optional<Eigen::MatrixXd> x, std::optional<Eigen::MatrixXd> w,
                     const std::string& mode) {
    Dataset d;
    d.y = y;
    d.x = x ? *x : Eigen::MatrixXd::Ones(y.cols(), 1);
    d.w = std::move(w);
    d.mode = data_mode_from_string(mode);
    return d;
}

py::dict draw_dict(const Draw& d) {
    py::dict out;
    out["iteration"] = d.iteration;
    out["lambda"] = d.lambda;
    out["phi"] = d.phi;
    out["rho"] = d.rho;
    out["beta"] = d.beta;
    out["sigma2"] = d.sigma2;
    out["theta"] = d.theta;
    out["v"] = d.v;
    if (d.mu.size() > 0) out["mu"] = d.mu;
    if (d.b.size() > 0) out["b"] = d.b;
    return out;
}

} // namespace

PYBIND11_MODULE(_sisfm, m) {
    m.doc() = "Structured increasing shrinkage factor models";

    py::register_exception<Error>(m, "SisfmError", PyExc_RuntimeError);

    py::class_<Hyperparameters>(m, "Hyperparameters")
        .def(py::init<>())
        .def_readwrite("alpha", &Hyperparameters::alpha)
        .def_readwrite("a_theta", &Hyperparameters::a_theta)
        .def_readwrite("b_theta", &Hyperparameters::b_theta)
        .def_readwrite("sigma_beta", &Hyperparameters::sigma_beta)
        .def_readwrite("a_sigma", &Hyperparameters::a_sigma)
        .def_readwrite("b_sigma", &Hyperparameters::b_sigma)
        .def_readwrite("c_p", &Hyperparameters::c_p)
        .def_readwrite("sigma_mu", &Hyperparameters::sigma_mu)
        .def_readwrite("sigma_b", &Hyperparameters::sigma_b)
        .def("theta0", &Hyperparameters::theta0)
        .def("validate", &Hyperparameters::validate)
        .def_static("default_offset", &Hyperparameters::default_offset);

    py::class_<ChainConfig>(m, "ChainConfig")
        .def(py::init<>())
        .def_readwrite("n_iterations", &ChainConfig::n_iterations)
        .def_readwrite("burn_in", &ChainConfig::burn_in)
        .def_readwrite("thin", &ChainConfig::thin)
        .def_readwrite("alpha0", &ChainConfig::alpha0)
        .def_readwrite("alpha1", &ChainConfig::alpha1)
        .def_readwrite("H_init", &ChainConfig::H_init)
        .def_readwrite("seed", &ChainConfig::seed)
        .def_readwrite("stream", &ChainConfig::stream)
        .def("retained", &ChainConfig::retained);

    m.def(
        "fit",
        [](const Eigen::MatrixXd& y, std::optional<Eigen::MatrixXd> x, std::optional<Eigen::MatrixXd> w,
           const std::string& mode, const Hyperparameters& hyper, const ChainConfig& config, int threads) {
            const Dataset data = make_dataset(y, std::move(x), std::move(w), mode);
            ChainOutput chain;
            SummaryReport report;
            {
                py::gil_scoped_release release;
                chain = run_chain(data, hyper, config);
                SummaryOptions opts;
                opts.threads = threads;
                report = summarize_chain(chain, data, hyper, opts);
            }
            py::list draws;
            for (const Draw& d : chain.draws) draws.append(draw_dict(d));
            py::dict out;
            out["draws"] = draws;
            out["h_active_trace"] = chain.h_active_trace;
            out["log_density"] = chain.log_density;
            out["map_index"] = report.map_index;
            out["lambda_map"] = report.lambda_map;
            out["lpml"] = report.lpml.lpml;
            out["e_h_active"] = report.e_h_active;
            out["mean_correlation"] = report.network.mean_correlation;
            out["partial_correlation"] = report.network.partial_correlation;
            return out;
        },
        py::arg("y"), py::arg("x") = py::none(), py::arg("w") = py::none(), py::arg("mode") = "gaussian",
        py::arg("hyper") = Hyperparameters{}, py::arg("config") = ChainConfig{}, py::arg("threads") = 1,
        "Run the Gibbs sampler and summarize the retained draws.");

    m.def(
        "generate_scenario",
        [](const std::string& scenario, Eigen::Index p, Eigen::Index k, double s, Eigen::Index n, std::uint64_t seed,
           std::uint64_t stream) {
            ScenarioSpec spec;
            spec.scenario = scenario_from_string(scenario);
            spec.p = p;
            spec.k = k;
            spec.s = s;
            spec.n = n;
            RngStream rng(seed, stream);
            const ScenarioData sim = generate_scenario(spec, rng);
            return py::make_tuple(sim.lambda0, sim.y, sim.x0);
        },
        py::arg("scenario"), py::arg("p"), py::arg("k"), py::arg("s") = 1.0, py::arg("n") = 250, py::arg("seed") = 1,
        py::arg("stream") = 0, "Synthetic data set: (Lambda0, y, x0).");

    m.def(
        "sample_sis_prior",
        [](const Hyperparameters& hyper, Eigen::Index p, Eigen::Index H, std::uint64_t seed) {
            RngStream rng(seed, 0);
            const PriorDraw d = sample_sis_prior(hyper, p, H, Eigen::MatrixXd(), rng);
            py::dict out;
            out["lambda"] = d.lambda;
            out["theta"] = d.theta;
            out["rho"] = d.rho;
            out["phi"] = d.phi;
            out["v"] = d.v;
            return out;
        },
        py::arg("hyper"), py::arg("p"), py::arg("H"), py::arg("seed") = 1);

    m.def("stick_breaking", [](const Eigen::VectorXd& v) {
        const StickBreaking sb = stick_breaking(v);
        return py::make_tuple(sb.w, sb.pi);
    });
    m.def("expected_pi", &expected_pi);
    m.def("sis_column_variance", &sis_column_variance);
    m.def(
        "lpml", [](const Eigen::MatrixXd& pointwise, bool per_observation) { return compute_lpml(pointwise, per_observation).lpml; },
        py::arg("pointwise"), py::arg("per_observation") = true);
    m.def("covariance_mse",
          [](const std::vector<Eigen::MatrixXd>& lambdas, const Eigen::MatrixXd& lambda0) {
              std::vector<Draw> draws(lambdas.size());
              for (std::size_t t = 0; t < lambdas.size(); ++t) draws[t].lambda = lambdas[t];
              return covariance_mse(draws, lambda0);
          },
          py::arg("lambdas"), py::arg("lambda0"));
    m.def("gaussian_log_likelihood",
          [](const Eigen::MatrixXd& y, const Eigen::MatrixXd& lambda, const Eigen::VectorXd& sigma2) {
              Dataset data = make_dataset(y, std::nullopt, std::nullopt, "gaussian");
              Draw d;
              d.lambda = lambda;
              d.sigma2 = sigma2;
              return pointwise_log_likelihood(d, data);
          },
          py::arg("y"), py::arg("lambda"), py::arg("sigma2"),
          "Per-observation log N_p(y_i; 0, Lambda Lambda' + diag(sigma2)).");
}
