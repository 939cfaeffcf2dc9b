#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace disco {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/* Seed of the named stream (module, purpose, index) under a master seed. */
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view module,
                                 std::string_view purpose, std::uint64_t index = 0)
{
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(module));
    h = splitmix64(h ^ fnv1a(purpose));
    return splitmix64(h ^ index);
}

/*
 * Random stream with distribution code written out here rather than taken from
 * <random>, whose distributions are implementation-defined.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    Rng(std::uint64_t master, std::string_view module, std::string_view purpose,
        std::uint64_t index = 0)
        : eng_(derive_seed(master, module, purpose, index))
    {
    }

    std::uint64_t next() { return eng_(); }

    /* Uniform on [0, 1). */
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /* Uniform on (0, 1). */
    double uniform_open()
    {
        double u;
        do {
            u = uniform();
        } while (u == 0.0);
        return u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n)
    {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    double normal()
    {
        if (hasSpare_) {
            hasSpare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(ang);
        hasSpare_ = true;
        return rad * std::cos(ang);
    }

    double gumbel() { return -std::log(-std::log(uniform_open())); }

    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    std::vector<std::size_t> permutation(std::size_t n)
    {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 eng_;
    bool hasSpare_ = false;
    double spare_ = 0.0;
};

} // namespace disco
