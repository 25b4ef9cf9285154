//! Flattening of `DataTypeTemplates` into per-DO leaf attribute lists.

use std::collections::BTreeMap;

use crate::xml::Element;

use super::DataObject;

const MAX_DEPTH: usize = 12;

pub(crate) struct TemplateIndex<'a> {
    ln_types: BTreeMap<&'a str, &'a Element>,
    do_types: BTreeMap<&'a str, &'a Element>,
    da_types: BTreeMap<&'a str, &'a Element>,
}

impl<'a> TemplateIndex<'a> {
    pub fn new(templates: Option<&'a Element>) -> Self {
        let mut idx = TemplateIndex {
            ln_types: BTreeMap::new(),
            do_types: BTreeMap::new(),
            da_types: BTreeMap::new(),
        };
        if let Some(t) = templates {
            for el in t.elements() {
                let Some(id) = el.attr("id") else { continue };
                let map = match el.local_name() {
                    "LNodeType" => &mut idx.ln_types,
                    "DOType" => &mut idx.do_types,
                    "DAType" => &mut idx.da_types,
                    _ => continue,
                };
                map.entry(id).or_insert(el);
            }
        }
        idx
    }

    pub fn data_objects(&self, ln_type: &str) -> Vec<DataObject> {
        let Some(lnt) = self.ln_types.get(ln_type) else {
            return Vec::new();
        };
        lnt.elements_named("DO")
            .filter_map(|d| {
                let name = d.attr("name")?;
                let mut attributes = Vec::new();
                if let Some(ty) = d.attr("type") {
                    self.flatten_do(ty, "", &mut attributes, 0);
                }
                Some(DataObject {
                    name: name.to_string(),
                    attributes,
                })
            })
            .collect()
    }

    fn flatten_do(&self, ty: &str, prefix: &str, out: &mut Vec<String>, depth: usize) {
        if depth > MAX_DEPTH {
            return;
        }
        let Some(dot) = self.do_types.get(ty) else {
            return;
        };
        for child in dot.elements() {
            let Some(name) = child.attr("name") else { continue };
            let path = join(prefix, name);
            match child.local_name() {
                "DA" => self.flatten_da(child, &path, out, depth + 1),
                "SDO" => {
                    if let Some(t) = child.attr("type") {
                        self.flatten_do(t, &path, out, depth + 1);
                    }
                }
                _ => {}
            }
        }
    }

    fn flatten_da(&self, da: &Element, path: &str, out: &mut Vec<String>, depth: usize) {
        let is_struct = da.attr("bType") == Some("Struct");
        match (is_struct, da.attr("type").and_then(|t| self.da_types.get(t))) {
            (true, Some(dat)) if depth <= MAX_DEPTH => {
                for bda in dat.elements_named("BDA") {
                    if let Some(name) = bda.attr("name") {
                        self.flatten_da(bda, &join(path, name), out, depth + 1);
                    }
                }
            }
            _ => out.push(path.to_string()),
        }
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Adds DO/DA paths declared through `DOI/SDI/DAI` instance elements.
pub(crate) fn merge_instances(dos: &mut Vec<DataObject>, ln: &Element) {
    for doi in ln.elements_named("DOI") {
        let Some(name) = doi.attr("name") else { continue };
        let mut leaves = Vec::new();
        collect_instance_leaves(doi, "", &mut leaves, 0);
        let slot = match dos.iter().position(|d| d.name == name) {
            Some(i) => &mut dos[i],
            None => {
                dos.push(DataObject {
                    name: name.to_string(),
                    attributes: Vec::new(),
                });
                dos.last_mut().unwrap()
            }
        };
        for leaf in leaves {
            let covered = slot
                .attributes
                .iter()
                .any(|a| a == &leaf || a.starts_with(&format!("{leaf}.")));
            if !covered {
                slot.attributes.push(leaf);
            }
        }
    }
}

fn collect_instance_leaves(el: &Element, prefix: &str, out: &mut Vec<String>, depth: usize) {
    if depth > MAX_DEPTH {
        return;
    }
    for child in el.elements() {
        let Some(name) = child.attr("name") else { continue };
        let path = join(prefix, name);
        match child.local_name() {
            "DAI" => out.push(path),
            "SDI" => collect_instance_leaves(child, &path, out, depth + 1),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xml::parse;

    #[test]
    fn flattens_structs_and_sdos() {
        let t = parse(
            r#"<DataTypeTemplates>
                <LNodeType id="MMXU_T" lnClass="MMXU"><DO name="PhV" type="WYE_T"/></LNodeType>
                <DOType id="WYE_T" cdc="WYE"><SDO name="phsA" type="CMV_T"/></DOType>
                <DOType id="CMV_T" cdc="CMV"><DA name="cVal" bType="Struct" type="Vec_T" fc="MX"/></DOType>
                <DAType id="Vec_T"><BDA name="mag" bType="Struct" type="AV_T"/></DAType>
                <DAType id="AV_T"><BDA name="f" bType="FLOAT32"/></DAType>
            </DataTypeTemplates>"#,
        )
        .unwrap();
        let idx = TemplateIndex::new(Some(&t));
        let dos = idx.data_objects("MMXU_T");
        assert_eq!(dos.len(), 1);
        assert_eq!(dos[0].attributes, vec!["phsA.cVal.mag.f".to_string()]);
    }

    #[test]
    fn self_referencing_types_terminate() {
        let t = parse(
            r#"<DataTypeTemplates>
                <LNodeType id="L"><DO name="X" type="D"/></LNodeType>
                <DOType id="D"><SDO name="s" type="D"/></DOType>
            </DataTypeTemplates>"#,
        )
        .unwrap();
        let idx = TemplateIndex::new(Some(&t));
        assert!(idx.data_objects("L")[0].attributes.is_empty());
    }
}
