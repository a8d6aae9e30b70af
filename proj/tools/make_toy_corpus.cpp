// Generates a small synthetic corpus in the on-disk layout the detector
// expects (pos/, neg/, test/, trueLocations.txt), so the CLI can be tried
// end to end without the real data.

#include <iostream>

#include <CLI11.hpp>

#include "partdet/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"make_toy_corpus: write a procedural car/non-car corpus"};
    partdet::SyntheticOptions opts;
    std::string out_dir = "toy_corpus";
    app.add_option("-o,--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--positives", opts.positives, "car crops")->capture_default_str();
    app.add_option("--negatives", opts.negatives, "non-car crops")->capture_default_str();
    app.add_option("--scenes", opts.scenes, "test scenes")->capture_default_str();
    app.add_option("--seed", opts.seed, "generator seed")->capture_default_str();
    app.add_option("--jitter", opts.rotation_jitter_deg, "rotation jitter, degrees")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        int cars = partdet::write_synthetic_corpus(out_dir, opts);
        std::cout << "wrote " << opts.positives << " positives, " << opts.negatives << " negatives, "
                  << opts.scenes << " scenes (" << cars << " embedded cars) under " << out_dir << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
