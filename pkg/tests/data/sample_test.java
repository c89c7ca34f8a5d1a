// CategoryTest exercises the category admin screen.
package tests;

import org.junit.Test;
import org.openqa.selenium.By;

/*
 * Regression test for category management.
 */
public class CategoryTest {

    @Test
    public void testAddCategory() {
        driver.get(baseUrl + "/manage_proj_cat_add_page.php");
        driver.findElement(By.name("category")).clear();
        driver.findElement(By.name("category")).sendKeys("Category1");
        driver.findElement(By.xpath("//input[@value='Add Category']")).click();
        // verify the new row appears
        assertEquals("Category1", driver.findElement(By.xpath("//table[3]//tr[2]/td[1]")).getText());
        driver.findElement(By.linkText("Proceed")).click();
    }
}
