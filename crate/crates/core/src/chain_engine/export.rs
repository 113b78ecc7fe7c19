use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BoxGrid, ChainClass};

/// One box of a class cover: `box,class,x,y,theta` with the lower corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    #[serde(rename = "box")]
    pub box_index: u32,
    pub class: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

pub fn write_class_csv<W: Write>(grid: &BoxGrid, classes: &[ChainClass], out: W) -> csv::Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let mut rows = 0;
    for class in classes {
        for &b in &class.boxes {
            let c = grid.corner(b);
            w.serialize(ClassRow {
                box_index: b,
                class: class.id,
                x: c[0],
                y: c[1],
                theta: c[2],
            })?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn read_class_csv<R: Read>(input: R) -> csv::Result<Vec<ClassRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
