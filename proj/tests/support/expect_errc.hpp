#pragma once

#include "fastmr/errors.hpp"

#include <gtest/gtest.h>

// Runs stmt and checks it throws NumericError with the given code.
#define EXPECT_ERRC(stmt_, errc_)                                                       \
    do {                                                                              \
        bool thrown_ = false;                                                         \
        try {                                                                         \
            stmt_;                                                                     \
        } catch (const ::fastmr::NumericError& e_) {                                  \
            thrown_ = true;                                                           \
            EXPECT_EQ(e_.code(), errc_) << e_.what();                                  \
        }                                                                             \
        EXPECT_TRUE(thrown_) << "expected " << ::fastmr::to_string(errc_);             \
    } while (0)
