#include "bmp/montecarlo.hpp"

#include <cmath>
#include <numeric>

namespace bmp {

namespace {

constexpr long long kExplosionGuard = 10'000'000;

// splitmix64: tiny counter-based generator; each (seed, replica) pair opens
// an independent stream.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t s) : state(s) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1).
    double uniform() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

    double exponential(double rate) { return -std::log(uniform()) / rate; }
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t replica) {
    SplitMix64 mix(seed ^ (0xd1342543de82ef95ULL * (replica + 1)));
    mix.next();
    return mix.next();
}

struct EventRates {
    std::vector<double> jump;  // total off-diagonal Q rate per state
    std::vector<double> total; // jump + branch per state
};

EventRates event_rates(const BmpModel& model) {
    EventRates r;
    r.jump.resize(model.n);
    r.total.resize(model.n);
    for (int x = 0; x < model.n; ++x) {
        double j = 0;
        for (int y = 0; y < model.n; ++y)
            if (y != x) j += model.motion(x, y);
        r.jump[x] = j;
        r.total[x] = j + model.branch_rate[x];
    }
    return r;
}

ParticleSystem run_one(const BmpModel& model, const EventRates& rates, int x0,
                       double t_end, SplitMix64& rng) {
    ParticleSystem sys;
    sys.counts.assign(model.n, 0);
    sys.counts[x0] = 1;
    double t = 0;

    for (;;) {
        double total_rate = 0;
        long long pop = 0;
        for (int x = 0; x < model.n; ++x) {
            total_rate += sys.counts[x] * rates.total[x];
            pop += sys.counts[x];
        }
        if (pop == 0 || total_rate <= 0) break;
        if (pop > kExplosionGuard)
            throw NumericalError("simulate: population exceeded the explosion guard");

        t += rng.exponential(total_rate);
        if (t >= t_end) break;

        // Pick the state whose particle fires, proportional to count * rate.
        double u = rng.uniform() * total_rate;
        int x = model.n - 1;
        for (int y = 0; y < model.n; ++y) {
            double w = sys.counts[y] * rates.total[y];
            if (u < w) {
                x = y;
                break;
            }
            u -= w;
        }

        // Branch or jump.
        double v = rng.uniform() * rates.total[x];
        if (v < model.branch_rate[x]) {
            --sys.counts[x];
            double w = rng.uniform();
            const auto& law = model.offspring[x];
            std::size_t a = law.size() - 1;
            for (std::size_t i = 0; i < law.size(); ++i) {
                if (w < law[i].p) {
                    a = i;
                    break;
                }
                w -= law[i].p;
            }
            for (int c : law[a].children) ++sys.counts[c];
        } else {
            double w = rng.uniform() * rates.jump[x];
            int target = -1;
            for (int y = 0; y < model.n; ++y) {
                if (y == x) continue;
                if (w < model.motion(x, y)) {
                    target = y;
                    break;
                }
                w -= model.motion(x, y);
            }
            if (target >= 0) {
                --sys.counts[x];
                ++sys.counts[target];
            }
        }
    }
    sys.time = t_end;
    return sys;
}

} // namespace

long long ParticleSystem::total() const {
    return std::accumulate(counts.begin(), counts.end(), 0LL);
}

ParticleSystem simulate(const BmpModel& model, int x0, double t_end, std::uint64_t seed) {
    if (x0 < 0 || x0 >= model.n) throw std::invalid_argument("simulate: x0 out of range");
    if (t_end < 0) throw std::invalid_argument("simulate: t_end must be >= 0");
    auto rates = event_rates(model);
    SplitMix64 rng(stream_seed(seed, 0));
    return run_one(model, rates, x0, t_end, rng);
}

McEstimate estimate_moment(const BmpModel& model, const std::vector<Vec>& fs, double t,
                           int x0, int replicas, std::uint64_t seed) {
    if (replicas < 100)
        throw std::invalid_argument("estimate_moment: at least 100 replicas required");
    if (x0 < 0 || x0 >= model.n)
        throw std::invalid_argument("estimate_moment: x0 out of range");
    auto rates = event_rates(model);

    Complex sum{0, 0};
    double sum_sq = 0; // sum of |value|^2 for the variance
    std::vector<Complex> vals(replicas);
    for (int r = 0; r < replicas; ++r) {
        SplitMix64 rng(stream_seed(seed, static_cast<std::uint64_t>(r)));
        ParticleSystem sys = run_one(model, rates, x0, t, rng);
        Complex prod{1, 0};
        for (const auto& f : fs) {
            Complex xf{0, 0};
            for (int y = 0; y < model.n; ++y)
                xf += static_cast<double>(sys.counts[y]) * f[y];
            prod *= xf;
        }
        vals[r] = prod;
        sum += prod;
    }
    Complex mean = sum / static_cast<double>(replicas);
    for (const auto& v : vals) sum_sq += std::norm(v - mean);

    McEstimate est;
    est.mean = mean;
    est.se = replicas > 1
                 ? std::sqrt(sum_sq / (static_cast<double>(replicas) *
                                       static_cast<double>(replicas - 1)))
                 : 0.0;
    est.replicas = replicas;
    est.seed = seed;
    return est;
}

} // namespace bmp
