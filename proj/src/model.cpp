#include "fedssc/nn.hpp"

#include <sstream>

namespace fedssc {

std::string ModelArchitecture::describe() const {
  std::ostringstream os;
  os << "in:" << in_channels << "x" << in_height << "x" << in_width;
  for (const auto& c : convs) {
    os << "|conv:" << c.out_channels << "k" << c.kernel << "s" << c.stride;
    if (c.pool > 0) os << "|pool:" << c.pool;
  }
  for (int w : fc_widths) os << "|fc:" << w;
  os << "|proj:";
  for (std::size_t i = 0; i < proj_widths.size(); ++i)
    os << (i ? "," : "") << proj_widths[i];
  os << "|cls:" << num_classes;
  return os.str();
}

ModelArchitecture ModelArchitecture::cifar_cnn(int num_classes) {
  ModelArchitecture a;
  a.in_channels = 3;
  a.in_height = 32;
  a.in_width = 32;
  a.convs = {{6, 5, 1, 2}, {16, 5, 1, 2}};
  a.fc_widths = {120, 84};
  a.proj_widths = {256, 256};
  a.num_classes = num_classes;
  return a;
}

ModelArchitecture ModelArchitecture::small_mlp(int input_dim, int num_classes) {
  ModelArchitecture a;
  a.in_channels = input_dim;
  a.in_height = 1;
  a.in_width = 1;
  a.fc_widths = {64, 64};
  a.proj_widths = {64, 32};
  a.num_classes = num_classes;
  return a;
}

}  // namespace fedssc
