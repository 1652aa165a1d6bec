#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_core, m) {
  m.doc() = "multi-fidelity hyperparameter tuning with data-subset fidelities";
}
