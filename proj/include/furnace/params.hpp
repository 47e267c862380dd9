#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "furnace/autodiff.hpp"
#include "furnace/tensor.hpp"

namespace furnace {

struct ParamEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named, shaped views over one flat trainable-parameter vector. The flat
/// layout is what the optimizer and the checkpoint format operate on.
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape) {
    for (const auto& e : entries_) {
      if (e.name == name)
        throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    }
    ParamEntry e;
    e.name = std::move(name);
    e.size = shape_numel(shape);
    e.shape = std::move(shape);
    e.offset = values_.size();
    values_.resize(values_.size() + e.size, 0.0);
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
  }

  std::size_t count() const { return entries_.size(); }
  std::size_t size() const { return values_.size(); }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    throw std::out_of_range("ParamStore: no parameter named " + std::string(name));
  }

  const ParamEntry& entry(std::string_view name) const {
    return entries_[index_of(name)];
  }

  void zero_entry(std::string_view name) {
    const ParamEntry& e = entry(name);
    std::fill(values_.begin() + e.offset, values_.begin() + e.offset + e.size, 0.0);
  }

  Tensor tensor(std::size_t i) const {
    const ParamEntry& e = entries_.at(i);
    return Tensor(e.shape, std::vector<double>(values_.begin() + e.offset,
                                               values_.begin() + e.offset + e.size));
  }

  void set_tensor(std::size_t i, const Tensor& t) {
    const ParamEntry& e = entries_.at(i);
    if (t.shape() != e.shape)
      throw std::invalid_argument("ParamStore: shape mismatch for " + e.name);
    std::copy(t.data().begin(), t.data().end(), values_.begin() + e.offset);
  }

  void init_uniform(std::size_t i, double lo, double hi, std::mt19937_64& rng) {
    const ParamEntry& e = entries_.at(i);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t k = 0; k < e.size; ++k) values_[e.offset + k] = dist(rng);
  }

  /// One graph leaf per entry, in registration order.
  std::vector<ad::NodePtr> make_leaves() const {
    std::vector<ad::NodePtr> leaves;
    leaves.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
      leaves.push_back(ad::variable(tensor(i)));
    return leaves;
  }

  /// Frozen leaves: values participate in the forward pass but receive no
  /// adjoints during backward.
  std::vector<ad::NodePtr> make_constant_leaves() const {
    std::vector<ad::NodePtr> leaves;
    leaves.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
      leaves.push_back(ad::constant(tensor(i)));
    return leaves;
  }

  /// Flattens leaf adjoints into a gradient vector aligned with values().
  std::vector<double> collect_grads(const std::vector<ad::NodePtr>& leaves) const {
    if (leaves.size() != entries_.size())
      throw std::invalid_argument("ParamStore: leaf count mismatch");
    std::vector<double> g(values_.size(), 0.0);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const ParamEntry& e = entries_[i];
      const Tensor& adj = leaves[i]->adjoint;
      if (adj.numel() != e.size)
        throw std::invalid_argument("ParamStore: missing adjoint for " + e.name);
      std::copy(adj.data().begin(), adj.data().end(), g.begin() + e.offset);
    }
    return g;
  }

  void save_binary(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("ParamStore: cannot write " + path);
    out.write(reinterpret_cast<const char*>(values_.data()),
              static_cast<std::streamsize>(values_.size() * sizeof(double)));
  }

  void load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ParamStore: cannot read " + path);
    in.read(reinterpret_cast<char*>(values_.data()),
            static_cast<std::streamsize>(values_.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != values_.size() * sizeof(double))
      throw std::runtime_error("ParamStore: " + path + " is truncated");
    char extra;
    if (in.read(&extra, 1))
      throw std::runtime_error("ParamStore: " + path + " has trailing bytes");
  }

  /// Plain-text manifest: one "name dim0,dim1,..." line per entry.
  std::string manifest() const {
    std::ostringstream out;
    for (const auto& e : entries_) {
      out << e.name << ' ';
      for (std::size_t d = 0; d < e.shape.size(); ++d) {
        if (d) out << ',';
        out << e.shape[d];
      }
      out << '\n';
    }
    return out.str();
  }

  void check_manifest(const std::string& text) const {
    if (text != manifest())
      throw std::runtime_error("ParamStore: manifest does not match model architecture");
  }

 private:
  std::vector<ParamEntry> entries_;
  std::vector<double> values_;
};

}  // namespace furnace
