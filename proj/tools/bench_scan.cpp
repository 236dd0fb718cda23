// Measures exact-scan throughput for 1..N threads on a random store and
// checks that every thread count produces identical rankings.
#include <chrono>
#include <cstdio>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "retrank/parallel.hpp"
#include "retrank/retriever.hpp"

int main(int argc, char** argv) {
    CLI::App app{"bench_scan"};
    std::size_t rows = 1000000, dim = 128, queries = 16, k = 10, max_threads = 0;
    std::uint64_t seed = 0;
    app.add_option("--rows", rows)->capture_default_str();
    app.add_option("--dim", dim)->capture_default_str();
    app.add_option("--queries", queries)->capture_default_str();
    app.add_option("--k", k)->capture_default_str();
    app.add_option("--max-threads", max_threads, "0 = hardware concurrency")->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    using namespace retrank;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0F, 1.0F);
    auto make = [&](std::size_t n, const char* prefix) {
        std::vector<DocId> ids;
        std::vector<float> data(n * dim);
        for (std::size_t i = 0; i < n; ++i) {
            ids.emplace_back(prefix + std::to_string(i));
        }
        for (auto& x : data) {
            x = gauss(rng);
        }
        return EmbeddingMatrix(dim, std::move(ids), std::move(data));
    };
    const auto store = make(rows, "d");
    const auto qs = make(queries, "q");
    const ExactIndex index(store);

    const std::size_t top = resolve_threads(max_threads);
    std::vector<RankedList> reference;
    double base_seconds = 0.0;
    std::printf("threads,seconds,rows_per_second,speedup,identical\n");
    std::vector<std::size_t> counts;
    for (std::size_t t = 1; t < top; t *= 2) {
        counts.push_back(t);
    }
    counts.push_back(top);
    for (const std::size_t t : counts) {
        const auto start = std::chrono::steady_clock::now();
        auto out = index.search_batch(qs, k, PoolFilter::all(), ScanOptions{t});
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (t == 1) {
            reference = out;
            base_seconds = secs;
        }
        std::printf("%zu,%.4f,%.0f,%.2f,%s\n", t, secs, double(rows) * double(queries) / secs, base_seconds / secs,
                    out == reference ? "yes" : "no");
    }
    return 0;
}
