// Writes a synthetic manifest + signal corpus for demos and smoke runs.

#include <CLI11.hpp>

#include <iostream>

#include "resemg/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic EMG corpus (manifest.csv + .emgs files)", "resemg-synth"};
  resemg::SyntheticSpec spec;
  std::string out_dir;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--subjects", spec.subjects, "number of synthetic subjects");
  app.add_option("--windows", spec.windows_per_subject, "windows per subject");
  app.add_option("--classes", spec.num_classes, "2 or 3")->check(CLI::IsMember({2, 3}));
  app.add_option("--noise", spec.noise, "Gaussian noise standard deviation");
  app.add_option("--seed", spec.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    std::cout << resemg::write_synthetic_corpus(spec, out_dir).string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
