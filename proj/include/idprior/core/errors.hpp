#pragma once

#include <stdexcept>
#include <string>

namespace idprior {

// Every error carries a short machine-readable category used by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

#define IDPRIOR_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& message) : Error(tag, message) {} \
    }

IDPRIOR_DEFINE_ERROR(ConfigError, "config");
IDPRIOR_DEFINE_ERROR(ArgumentError, "argument");
IDPRIOR_DEFINE_ERROR(ShapeError, "shape");
IDPRIOR_DEFINE_ERROR(SequenceLengthError, "sequence_length");
IDPRIOR_DEFINE_ERROR(DegenerateBatchError, "degenerate_batch");
IDPRIOR_DEFINE_ERROR(RegistrationError, "registration");
IDPRIOR_DEFINE_ERROR(TemplateError, "template");
IDPRIOR_DEFINE_ERROR(BatchError, "batch");
IDPRIOR_DEFINE_ERROR(TrainingError, "training");
IDPRIOR_DEFINE_ERROR(OracleError, "oracle");
IDPRIOR_DEFINE_ERROR(ManifestError, "manifest");
IDPRIOR_DEFINE_ERROR(GenerationError, "generation");
IDPRIOR_DEFINE_ERROR(EvaluationError, "evaluation");
IDPRIOR_DEFINE_ERROR(CheckpointError, "checkpoint");
IDPRIOR_DEFINE_ERROR(IoError, "io");
IDPRIOR_DEFINE_ERROR(PrerequisiteError, "prerequisite");

#undef IDPRIOR_DEFINE_ERROR

}  // namespace idprior
