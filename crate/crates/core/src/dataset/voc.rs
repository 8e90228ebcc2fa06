//! The subset of Pascal VOC XML written by common labelling tools:
//! `size{width,height}` and any number of `object{name, bndbox{..}}`.

use crate::error::{Error, Result};
use crate::imaging::PixelBox;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocObject {
    pub name: String,
    pub bbox: PixelBox,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocAnnotation {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<VocObject>,
}

fn xml_err(element: &str, message: impl Into<String>) -> Error {
    Error::Xml {
        element: element.into(),
        message: message.into(),
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

/// Pixel coordinate; integral decimals such as `"10.0"` are accepted.
fn coord(node: roxmltree::Node, parent: &str, name: &str) -> Result<usize> {
    let text = child_text(node, name).ok_or_else(|| xml_err(parent, format!("missing <{name}>")))?;
    let v: f64 = text
        .parse()
        .map_err(|_| xml_err(parent, format!("<{name}> value {text:?} is not a number")))?;
    if !(v >= 0.0 && v.fract() == 0.0) {
        return Err(xml_err(parent, format!("<{name}> value {text:?} is not a pixel index")));
    }
    Ok(v as usize)
}

pub fn parse_voc_xml(doc: &str) -> Result<VocAnnotation> {
    let xml = roxmltree::Document::parse(doc).map_err(|e| xml_err("annotation", e.to_string()))?;
    let root = xml.root_element();
    let size = child(root, "size").ok_or_else(|| xml_err("size", "missing <size> element"))?;
    let width = coord(size, "size", "width")?;
    let height = coord(size, "size", "height")?;
    if width == 0 || height == 0 {
        return Err(xml_err("size", "image size must be positive"));
    }
    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let name = child_text(obj, "name")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| xml_err("object", "missing <name>"))?
            .to_string();
        let bnd = child(obj, "bndbox").ok_or_else(|| xml_err("bndbox", "missing <bndbox>"))?;
        let (x0, y0) = (coord(bnd, "bndbox", "xmin")?, coord(bnd, "bndbox", "ymin")?);
        let (x1, y1) = (coord(bnd, "bndbox", "xmax")?, coord(bnd, "bndbox", "ymax")?);
        if x1 < x0 || y1 < y0 {
            return Err(xml_err(
                "bndbox",
                format!("inverted box ({x0},{y0},{x1},{y1}) for object {name:?}"),
            ));
        }
        objects.push(VocObject {
            name,
            bbox: PixelBox {
                x_min: x0,
                y_min: y0,
                x_max: x1,
                y_max: y1,
            },
        });
    }
    Ok(VocAnnotation {
        width,
        height,
        objects,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_voc_xml(filename: &str, ann: &VocAnnotation) -> String {
    let mut out = String::from("<annotation>\n");
    out += &format!("  <filename>{}</filename>\n", escape(filename));
    out += &format!(
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>\n",
        ann.width, ann.height
    );
    for o in &ann.objects {
        out += &format!(
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>\n",
            escape(&o.name), o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max
        );
    }
    out + "</annotation>\n"
}
