#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "ipa/checkpoint.hpp"
#include "ipa/errors.hpp"
#include "ipa/gpt_model.hpp"
#include "ipa/ipa_model.hpp"
#include "ipa/run_config.hpp"
#include "ipa/tokenizer.hpp"

namespace py = pybind11;

namespace {

ipa::json to_json(const py::dict& d) {
  const auto text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
  return ipa::json::parse(text);
}

py::dict to_dict(const ipa::json& j) {
  return py::module_::import("json").attr("loads")(j.dump()).cast<py::dict>();
}

py::array_t<double> logits(const ipa::LanguageModel& model, const std::vector<std::int32_t>& ids) {
  ipa::ad::NoGradGuard guard;
  const auto out = model.forward(ids).value();
  py::array_t<double> arr({out.rows(), out.cols()});
  auto view = arr.mutable_unchecked<2>();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) view(r, c) = out(r, c);
  }
  return arr;
}

template <class Model, class Config>
void bind_model(py::module_& m, const char* name) {
  py::class_<Model, ipa::LanguageModel>(m, name)
      .def(py::init([](const py::dict& config, std::uint64_t seed) {
             return std::make_unique<Model>(Config::from_json(to_json(config)), seed);
           }),
           py::arg("config") = py::dict(), py::arg("seed") = 0);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Iterative piecewise affine language models and a GPT baseline";

  py::register_exception<ipa::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ipa::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ipa::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ipa::IndexError>(m, "IndexError", PyExc_IndexError);
  py::register_exception<ipa::NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ipa::IoError>(m, "IoError", PyExc_OSError);

  py::class_<ipa::Tokenizer>(m, "Tokenizer")
      .def(py::init<>())
      .def_static("train", [](const py::bytes& corpus, std::size_t vocab) {
        return ipa::Tokenizer::train(std::string(corpus), vocab);
      }, py::arg("corpus"), py::arg("vocab"))
      .def_static("load", [](const std::string& path) { return ipa::Tokenizer::load(path); })
      .def_static("parse", [](const std::string& text) { return ipa::Tokenizer::parse(text); })
      .def("encode", [](const ipa::Tokenizer& t, const py::bytes& text) {
        return t.encode(std::string(text));
      })
      .def("decode", [](const ipa::Tokenizer& t, const std::vector<std::int32_t>& ids) {
        return py::bytes(t.decode(ids));
      })
      .def("serialize", &ipa::Tokenizer::serialize)
      .def("save", [](const ipa::Tokenizer& t, const std::string& path) { t.save(path); })
      .def_property_readonly("vocab_size", &ipa::Tokenizer::vocab_size)
      .def_property_readonly("merges", &ipa::Tokenizer::merges)
      .def_property_readonly("fingerprint", &ipa::Tokenizer::fingerprint);

  py::class_<ipa::LanguageModel>(m, "LanguageModel")
      .def("logits", &logits, py::arg("ids"), "Vocabulary logits, V x len(ids)")
      .def_property_readonly("kind", &ipa::LanguageModel::kind)
      .def_property_readonly("config", [](const ipa::LanguageModel& mdl) { return to_dict(mdl.config_json()); })
      .def_property_readonly("parameter_count", &ipa::LanguageModel::parameter_count)
      .def("save", [](const ipa::LanguageModel& mdl, const std::string& path) {
        ipa::write_checkpoint(path, ipa::capture(mdl, ipa::AdamState{}, ipa::json::object()));
      });
  m.def("load", [](const std::string& path) {
    return ipa::model_from_checkpoint(ipa::read_checkpoint(path));
  }, py::arg("path"), "Model stored in a checkpoint file");

  bind_model<ipa::IPAModel, ipa::ModelConfig>(m, "IPAModel");
  bind_model<ipa::GPTModel, ipa::GPTConfig>(m, "GPTModel");

  m.def("param_count_ipa", [](const py::dict& config, std::size_t length) {
    return ipa::param_count_ipa(ipa::ModelConfig::from_json(to_json(config)), length);
  }, py::arg("config"), py::arg("m"));
  m.def("param_count_gpt", [](const py::dict& config, std::size_t length) {
    return ipa::param_count_gpt(ipa::GPTConfig::from_json(to_json(config)), length);
  }, py::arg("config"), py::arg("m"));
  m.def("gradcheck", [](const std::string& kind, std::uint64_t seed) {
    return ipa::tiny_gradcheck(kind, seed).max_relative_error;
  }, py::arg("kind") = "ipa", py::arg("seed") = 0,
     "Max relative finite-difference error of the tiny model's gradients");
}
