use pyo3::prelude::*;

#[pymodule]
fn mvms(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
