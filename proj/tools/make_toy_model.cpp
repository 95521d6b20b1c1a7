// Writes the small conv + fc model under data/ used by the CLI examples.
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "dpnet/model_format.hpp"
#include "dpnet/random.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_toy_model OUT.json\n";
    return 2;
  }
  dpnet::Rng rng(2024);
  dpnet::DenseModel model;
  const auto add = [&](const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> data(n);
    const double sd = fan_in ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.01;
    for (auto& v : data) v = static_cast<float>(rng.Normal(0.0, sd));
    model.tensors.emplace_back(name, std::move(shape), std::move(data));
  };
  add("conv1.weight", {8, 3, 3, 3}, 27);
  add("conv1.bias", {8}, 0);
  add("conv2.weight", {16, 8, 3, 3}, 72);
  add("conv2.bias", {16}, 0);
  add("fc1.weight", {64, 256}, 256);
  add("fc1.bias", {64}, 0);
  add("fc2.weight", {10, 64}, 64);
  add("fc2.bias", {10}, 0);
  dpnet::write_dense_model(model, argv[1]);
  return 0;
}
