// spl:set editorKind = "html"
// spl:if MarkdownEditor
// spl:set editorKind = "markdown"
// spl:elif WYSIWYGEditor
// spl:set editorKind = "wysiwyg"
// spl:endif
import { Toolbar } from "../../editor/toolbar/toolbar.js";
// spl:uses postuses-fileuploader
import { FileUploader } from "../../upload/file-uploader.js";
// spl:enduses

const EDITOR_KIND = "/* spl:val editorKind */";

export function mountEditor(form) {
  const toolbar = new Toolbar(form, EDITOR_KIND);
  // spl:uses postuses-fileuploader
  const uploader = new FileUploader(form.querySelector("[name=image-file]"));
  form.addEventListener("submit", () => uploader.flush());
  // spl:enduses
  return toolbar;
}
