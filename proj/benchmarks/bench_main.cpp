#include <benchmark/benchmark.h>

#include <cmath>
#include <string>

#include "voltmargin/case_io.hpp"
#include "voltmargin/detector.hpp"
#include "voltmargin/error.hpp"
#include "voltmargin/grid_model.hpp"
#include "voltmargin/integrator.hpp"
#include "voltmargin/ou_process.hpp"

using namespace voltmargin;

namespace {

struct Fixture {
    CaseDocument doc;
    GridModel model;
    GridState state;

    explicit Fixture(const std::string& name)
        : doc(parse_case(std::string(VOLTMARGIN_DATA_DIR) + "/cases/" + name)),
          model(doc.network, doc.loads, doc.ou.dim()),
          state(model.initial_guess()) {
        state.eta.eta.assign(doc.ou.dim(), 0.0);
        state.lambda = 0.5;
        if (!model.initialize_equilibrium(state).ok()) throw NumericalError("bench: no equilibrium");
    }
};

const char* kCases[] = {"three_bus.case", "ieee14_ref.case"};

void BM_ou_step(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const OUParams p = OUParams::unit_variance(std::vector<double>(n, 1.0), 0.1);
    RngStream rng(1, 1);
    OUState s = ou_initial_sample(p, rng);
    for (auto _ : st) {
        ou_step(s, p, 0.05, rng);
        benchmark::DoNotOptimize(s.eta.data());
    }
}
BENCHMARK(BM_ou_step)->Arg(1)->Arg(4)->Arg(16);

void BM_sdae_step(benchmark::State& st) {
    Fixture f(kCases[st.range(0)]);
    OUParams ou = f.doc.ou;
    ou.sigma = 0.1;
    RampSchedule ramp;
    ramp.delta_lambda = 0.0;
    ramp.interval = 1.0;
    IntegratorConfig cfg;
    RngStream rng(2, 1);
    AlgebraicFactor chord;
    f.model.reduced_state_matrix(f.state, ou, &chord);
    for (auto _ : st) {
        GridState s = f.state;
        benchmark::DoNotOptimize(sdae_step(f.model, s, ou, ramp, cfg, rng, &chord));
    }
    st.SetLabel(kCases[st.range(0)]);
}
BENCHMARK(BM_sdae_step)->Arg(0)->Arg(1);

void BM_newton(benchmark::State& st) {
    Fixture f(kCases[st.range(0)]);
    for (auto _ : st) {
        GridState s = f.state;
        s.lambda += 0.02;
        benchmark::DoNotOptimize(f.model.solve_algebraic(s));
    }
    st.SetLabel(kCases[st.range(0)]);
}
BENCHMARK(BM_newton)->Arg(0)->Arg(1);

void BM_reduced_matrix_rcond(benchmark::State& st) {
    Fixture f(kCases[st.range(0)]);
    for (auto _ : st) {
        const Eigen::MatrixXd a = f.model.reduced_state_matrix(f.state, f.doc.ou);
        benchmark::DoNotOptimize(rcond_estimate(a));
    }
    st.SetLabel(kCases[st.range(0)]);
}
BENCHMARK(BM_reduced_matrix_rcond)->Arg(0)->Arg(1);

void BM_rcond(benchmark::State& st) {
    const auto n = st.range(0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n) + n * Eigen::MatrixXd::Identity(n, n);
    for (auto _ : st) benchmark::DoNotOptimize(rcond_estimate(a));
}
BENCHMARK(BM_rcond)->Arg(4)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
