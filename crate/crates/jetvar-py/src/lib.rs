//! Python bindings (placeholder; filled in once the core API is complete).

use pyo3::prelude::*;

#[pyfunction]
fn engine_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

#[pymodule]
fn jetvar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(engine_version, m)?)?;
    Ok(())
}
