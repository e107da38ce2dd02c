//! Holds the `acceptance` report in `tests/acceptance.rs`, kept in its own
//! package so it runs after the unit, oracle and property suites.
