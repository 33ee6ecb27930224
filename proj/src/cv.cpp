#include "ml2sls/cv.hpp"

#include "ml2sls/common.hpp"

namespace ml2sls {

std::vector<int> kfold_split(int n, int k, Substream& stream) {
  if (k < 2) throw DesignError("kfold_split: need at least 2 folds");
  if (n < k) throw DesignError("kfold_split: n smaller than fold count");
  const std::vector<int> perm = stream.permutation(n);
  std::vector<int> fold(static_cast<std::size_t>(n));
  // First n%k folds take one extra element.
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    for (int j = 0; j < size; ++j) fold[static_cast<std::size_t>(perm[pos++])] = f;
  }
  return fold;
}

}  // namespace ml2sls
