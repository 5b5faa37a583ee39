use pyo3::prelude::*;

#[pymodule]
fn softner_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
