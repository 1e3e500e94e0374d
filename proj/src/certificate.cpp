#include "certbench/certificate.hpp"

#include <cmath>
#include <sstream>

#include "certbench/errors.hpp"
#include "certbench/gen.hpp"

namespace certbench {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

CheckReport check_common(const Instance& inst) {
  CheckReport rep;
  if (inst.id.empty()) rep.fail("instance id is empty");
  if (inst.cert.family.empty()) rep.fail("certificate family is empty");
  try {
    inst.net.validate();
  } catch (const std::exception& e) {
    rep.fail(std::string("network rejected: ") + e.what());
    return rep;  // nothing below is meaningful on a broken net
  }
  const std::size_t d = inst.net.input_dim();
  if (inst.x0.size() != d) {
    rep.fail("x0 has " + std::to_string(inst.x0.size()) +
             " entries, network expects " + std::to_string(d));
    return rep;
  }
  if (inst.label < 0 || inst.label >= inst.net.num_classes())
    rep.fail("label " + std::to_string(inst.label) + " out of range");
  if (!(inst.eps > 0.0) || !std::isfinite(inst.eps))
    rep.fail("eps must be positive and finite, got " + fmt(inst.eps));
  for (double v : inst.x0)
    if (!std::isfinite(v)) {
      rep.fail("x0 has a non-finite entry");
      break;
    }
  if (!rep.ok()) return rep;

  if (!inst.dom_lo.empty() || !inst.dom_hi.empty()) {
    if (inst.dom_lo.size() != d || inst.dom_hi.size() != d) {
      rep.fail("domain bounds have wrong length");
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        if (inst.dom_lo[i] > inst.x0[i] - inst.eps ||
            inst.dom_hi[i] < inst.x0[i] + inst.eps) {
          rep.fail("eps-box leaves the declared input domain at coordinate " +
                   std::to_string(i));
          break;
        }
      }
    }
  }

  MarginReport m0 = margin(inst.net, inst.x0, inst.label);
  if (!(m0.value > 0.0))
    rep.fail("x0 is not classified as the label: margin " + fmt(m0.value));

  if (!inst.cert.robust) {
    const Vec* w = inst.cert.vector("witness");
    if (w == nullptr) {
      rep.fail("non-robust certificate is missing its witness");
    } else if (w->size() != d) {
      rep.fail("witness has wrong length");
    } else {
      double dist = 0.0;
      bool finite = true;
      for (std::size_t i = 0; i < d; ++i) {
        if (!std::isfinite((*w)[i])) finite = false;
        dist = std::max(dist, std::abs((*w)[i] - inst.x0[i]));
      }
      if (!finite) {
        rep.fail("witness has a non-finite entry");
      } else {
        if (dist > inst.eps)
          rep.fail("witness leaves the eps-box: distance " + fmt(dist) +
                   " > eps " + fmt(inst.eps));
        MarginReport mw = margin(inst.net, *w, inst.label);
        if (!(mw.value < 0.0))
          rep.fail("witness does not flip the label: margin " +
                   fmt(mw.value));
      }
    }
  }
  return rep;
}

CheckReport check_certificate(const Instance& inst) {
  CheckReport rep = check_common(inst);
  if (!rep.ok()) return rep;

  const std::string& f = inst.cert.family;
  if (f == kFamilyMeap) {
    rep.merge(check_meap(inst));
  } else if (f == kFamilyExactRadius) {
    rep.merge(check_exact_radius(inst));
  } else if (f == kFamilyConstBox) {
    rep.merge(check_const_box(inst));
  } else if (f == kFamilyCorner) {
    rep.merge(check_corner(inst));
  } else if (f == kFamilyContractive) {
    rep.merge(check_contractive(inst));
  } else if (f == kFamilyPairedBias) {
    rep.merge(check_paired_bias(inst));
  } else if (f == kFamilySoftmaxOrder) {
    rep.merge(check_softmax_order(inst));
  } else if (f == kFamilyDominantKey) {
    rep.merge(check_dominant_key(inst));
  } else if (f == kFamilyPolynomial) {
    rep.merge(check_polynomial(inst));
  } else {
    rep.fail("unknown certificate family: " + f);
  }
  return rep;
}

Instance generate_instance(const std::string& family, const GenParams& p,
                           std::uint64_t seed, std::string id) {
  if (family == kFamilyMeap) return gen_meap(p, seed, std::move(id));
  if (family == kFamilyExactRadius)
    return gen_exact_radius(p, seed, std::move(id));
  if (family == kFamilyConstBox) return gen_const_box(p, seed, std::move(id));
  if (family == kFamilyCorner) return gen_corner(p, seed, std::move(id));
  if (family == kFamilyContractive)
    return gen_contractive(p, seed, std::move(id));
  if (family == kFamilyPairedBias)
    return gen_paired_bias(p, seed, std::move(id));
  if (family == kFamilySoftmaxOrder)
    return gen_softmax_order(p, seed, std::move(id));
  if (family == kFamilyDominantKey)
    return gen_dominant_key(p, seed, std::move(id));
  if (family == kFamilyPolynomial)
    return gen_polynomial(p, seed, std::move(id));
  throw ConfigError("unknown generator family: " + family);
}

}  // namespace certbench
