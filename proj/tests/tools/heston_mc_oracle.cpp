// Generates the cached Monte-Carlo reference for the Heston pricer.
//
//   heston_mc_oracle [--pairs N] [--steps M] [--seed S] [--threads T] [--out FILE]
//
// Antithetic full-truncation log-Euler paths under the default parameters,
// at-the-money call with one year to expiry. Pair i uses counters
// [i * steps, (i + 1) * steps) of two normal streams, so the estimate does
// not depend on the thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "deephedge/heston.hpp"
#include "deephedge/rng.hpp"

namespace {

struct Options {
    std::uint64_t pairs = 500000;
    int steps = 2000;
    std::uint64_t seed = 20250101;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    std::string out;
};

double discounted_pair_payoff(const deephedge::heston::HestonParams& p, double strike, double ttm,
                              int steps, const deephedge::rng::CounterRng& gen, std::uint64_t pair) {
    const double dt = ttm / steps;
    const double sqrt_dt = std::sqrt(dt);
    const double rho_c = std::sqrt(1.0 - p.rho * p.rho);
    double x[2] = {std::log(p.s0), std::log(p.s0)};
    double v[2] = {p.v0, p.v0};
    const std::uint64_t base = pair * static_cast<std::uint64_t>(steps);
    for (int k = 0; k < steps; ++k) {
        const double z1 = gen.normal(0, base + k);
        const double z2 = p.rho * z1 + rho_c * gen.normal(1, base + k);
        for (int a = 0; a < 2; ++a) {
            const double sign = a == 0 ? 1.0 : -1.0;
            const double vp = std::max(v[a], 0.0);
            const double sv = std::sqrt(vp) * sqrt_dt;
            x[a] += (p.rate - 0.5 * vp) * dt + sv * sign * z1;
            v[a] += p.kappa * (p.theta_bar - vp) * dt + p.xi * sv * sign * z2;
        }
    }
    const double df = std::exp(-p.rate * ttm);
    return 0.5 * df * (std::max(std::exp(x[0]) - strike, 0.0) + std::max(std::exp(x[1]) - strike, 0.0));
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string key = argv[i];
        const std::string val = argv[i + 1];
        if (key == "--pairs") opt.pairs = std::stoull(val);
        else if (key == "--steps") opt.steps = std::stoi(val);
        else if (key == "--seed") opt.seed = std::stoull(val);
        else if (key == "--threads") opt.threads = static_cast<unsigned>(std::stoul(val));
        else if (key == "--out") opt.out = val;
        else {
            std::cerr << "unknown option " << key << '\n';
            return 2;
        }
    }
    const deephedge::heston::HestonParams p;
    const double strike = 100.0, ttm = 1.0;
    const deephedge::rng::CounterRng gen(opt.seed);

    std::vector<double> values(opt.pairs);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < opt.threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::uint64_t i = t; i < opt.pairs; i += opt.threads) {
                values[i] = discounted_pair_payoff(p, strike, ttm, opt.steps, gen, i);
            }
        });
    }
    for (auto& th : pool) th.join();

    double mean = 0.0, m2 = 0.0;
    for (std::uint64_t i = 0; i < opt.pairs; ++i) {
        const double d = values[i] - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (values[i] - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(opt.pairs - 1) / static_cast<double>(opt.pairs));
    const double analytic = deephedge::heston::option_price(p, p.s0, p.v0, strike, ttm,
                                                            deephedge::bs::OptionKind::call);

    const nlohmann::ordered_json j{
        {"params",
         {{"s0", p.s0}, {"v0", p.v0}, {"kappa", p.kappa}, {"theta_bar", p.theta_bar},
          {"xi", p.xi}, {"rho", p.rho}, {"rate", p.rate}}},
        {"strike", strike},
        {"ttm", ttm},
        {"scheme", "antithetic full-truncation log-Euler"},
        {"pairs", opt.pairs},
        {"paths", 2 * opt.pairs},
        {"steps", opt.steps},
        {"seed", opt.seed},
        {"price", mean},
        {"std_error", se}};
    const std::string text = j.dump(2);
    if (opt.out.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream(opt.out) << text << '\n';
    }
    std::cerr << "mc " << mean << " +- " << se << "  analytic " << analytic << "  z "
              << (analytic - mean) / se << '\n';
    return 0;
}
