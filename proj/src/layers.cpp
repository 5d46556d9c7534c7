// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/layers.hpp"

#include "cfnet/errors.hpp"
#include "cfnet/random.hpp"

namespace cfnet {

std::uint64_t name_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, ConvSpec spec, Init init,
               std::uint64_t seed, Real gain)
    : name_(name), spec_(spec) {
  spec_.validate();
  weight_ = &store.add(name + ".w", spec_.weight_shape());
  bias_ = &store.add(name + ".b", Shape4{1, spec_.out_channels, 1, 1});
  if (init == Init::kKaiming) {
    kaiming_init(*weight_, spec_.fan_in(), derive_seed(seed, name_hash(name)), gain);
  }
}

Conv2d Conv2d::shared(ParamStore& store, const std::string& name, const Conv2d& source) {
  Conv2d c;
  c.name_ = name;
  c.spec_ = source.spec_;
  c.weight_ = &store.share(name + ".w", source.name_ + ".w");
  c.bias_ = &store.share(name + ".b", source.name_ + ".b");
  return c;
}

Tensor4 Conv2d::forward(const Tensor4& x) const {
  return conv2d_forward(x, weight_->value, bias_->value.values(), spec_);
}

Tensor4 Conv2d::backward(const Tensor4& grad_out, const Tensor4& saved_input,
                         bool need_input_grad) const {
  ConvGrads g = conv2d_backward(grad_out, saved_input, weight_->value, spec_, need_input_grad);
  weight_->grad += g.weight;
  for (std::size_t o = 0; o < g.bias.size(); ++o) bias_->grad[o] += g.bias[o];
  return std::move(g.input);
}

PRelu::PRelu(ParamStore& store, const std::string& name, std::size_t channels) : name_(name) {
  slope_ = &store.add(name + ".slope", Shape4{1, channels, 1, 1});
  slope_->value.fill(0.25);
}

PRelu PRelu::shared(ParamStore& store, const std::string& name, const PRelu& source) {
  PRelu p;
  p.name_ = name;
  p.slope_ = &store.share(name + ".slope", source.name_ + ".slope");
  return p;
}

Tensor4 PRelu::forward(const Tensor4& x) const { return prelu(x, slope_->value.values()); }

Tensor4 PRelu::backward(const Tensor4& grad_out, const Tensor4& saved_input) const {
  PreluGrads g = prelu_backward(grad_out, saved_input, slope_->value.values());
  for (std::size_t c = 0; c < g.slope.size(); ++c) slope_->grad[c] += g.slope[c];
  return std::move(g.input);
}

ConvStack::ConvStack(ParamStore& store, const std::string& prefix,
                     const std::vector<LayerPlan>& plan, std::uint64_t seed) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i > 0 && plan[i].spec.in_channels != plan[i - 1].spec.out_channels) {
      throw ConfigError(prefix + ": layer " + std::to_string(i) + " channel mismatch");
    }
    const std::string id = prefix + ".conv" + std::to_string(i);
    const Real gain =
        plan[i].gain > 0 ? plan[i].gain : (plan[i].activation ? kRectifierGain : 1.0);
    convs_.emplace_back(store, id, plan[i].spec, plan[i].init, seed, gain);
    has_act_.push_back(plan[i].activation);
    acts_.push_back(plan[i].activation
                        ? PRelu(store, prefix + ".act" + std::to_string(i), plan[i].spec.out_channels)
                        : PRelu());
  }
}

ConvStack ConvStack::shared(ParamStore& store, const std::string& prefix, const ConvStack& source) {
  ConvStack s;
  for (std::size_t i = 0; i < source.convs_.size(); ++i) {
    s.convs_.push_back(Conv2d::shared(store, prefix + ".conv" + std::to_string(i), source.convs_[i]));
    s.has_act_.push_back(source.has_act_[i]);
    s.acts_.push_back(source.has_act_[i]
                          ? PRelu::shared(store, prefix + ".act" + std::to_string(i), source.acts_[i])
                          : PRelu());
  }
  return s;
}

Tensor4 ConvStack::forward(const Tensor4& x, Cache* cache) const {
  if (cache) {
    cache->conv_in.clear();
    cache->act_in.clear();
  }
  Tensor4 h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Tensor4 y = convs_[i].forward(h);
    if (cache) cache->conv_in.push_back(std::move(h));
    if (has_act_[i]) {
      h = acts_[i].forward(y);
      if (cache) cache->act_in.push_back(std::move(y));
    } else {
      h = std::move(y);
      if (cache) cache->act_in.emplace_back();
    }
  }
  return h;
}

Tensor4 ConvStack::backward(const Tensor4& grad_out, const Cache& cache,
                            bool need_input_grad) const {
  Tensor4 g = grad_out;
  for (std::size_t i = convs_.size(); i-- > 0;) {
    if (has_act_[i]) g = acts_[i].backward(g, cache.act_in[i]);
    g = convs_[i].backward(g, cache.conv_in[i], need_input_grad || i > 0);
  }
  return g;
}

}  // namespace cfnet
