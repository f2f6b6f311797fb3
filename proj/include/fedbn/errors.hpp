#pragma once

#include <stdexcept>
#include <string>

namespace fedbn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define FEDBN_DEFINE_ERROR(Name)          \
    class Name : public Error {           \
    public:                               \
        using Error::Error;               \
    }

FEDBN_DEFINE_ERROR(SchemaError);
FEDBN_DEFINE_ERROR(FormatError);
FEDBN_DEFINE_ERROR(PartitionError);
FEDBN_DEFINE_ERROR(LocalityError);
FEDBN_DEFINE_ERROR(AlignmentError);
FEDBN_DEFINE_ERROR(RegistrationError);
FEDBN_DEFINE_ERROR(DomainError);
FEDBN_DEFINE_ERROR(DegenerateEvidenceError);
FEDBN_DEFINE_ERROR(ProtocolError);
FEDBN_DEFINE_ERROR(TransportError);
FEDBN_DEFINE_ERROR(SessionError);
FEDBN_DEFINE_ERROR(SizingError);
FEDBN_DEFINE_ERROR(UndefinedAucError);
FEDBN_DEFINE_ERROR(ConfigError);

#undef FEDBN_DEFINE_ERROR

}  // namespace fedbn
